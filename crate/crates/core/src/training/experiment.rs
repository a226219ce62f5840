//! Multi-round, multi-trial experiment driver.

use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::delivery::{account_summary, DeliveryStats, DeliveryTotals};
use crate::error::{Error, Result};
use crate::seeds::{rng_from, round_seed, stream};
use crate::selection::BlockedParams;
use crate::training::cohort::sample_cohort;
use crate::training::optimizer::{OptimizerKind, ServerOptimizer};
use crate::training::round::{run_round, RoundConfig, RoundStats, Scheme};
use crate::training::task::Task;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLoopConfig {
    pub rounds: usize,
    pub cohort_size: usize,
    pub eval_every: usize,
    pub trials: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub server_lr: f64,
    pub round: RoundConfig,
}

impl TrainLoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 || self.cohort_size == 0 || self.trials == 0 || self.eval_every == 0 {
            return Err(Error::BadConfig(
                "rounds, cohort size, trials and eval_every must all be at least 1".into(),
            ));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Valid,
    Test,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Valid => "valid",
            Phase::Test => "test",
        }
    }
}

/// One metric value plus the trial's running cost counters at that round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub trial: usize,
    pub round: usize,
    pub phase: Phase,
    pub metric: String,
    pub value: f64,
    /// Cumulative over the trial through this round.
    pub scalars_down: usize,
    pub scalars_up: usize,
    pub psi_evals: usize,
    pub wasted_slices: usize,
    /// Largest client model so far over `s`.
    pub rel_model_size: f64,
}

/// Server state of one trial, advanced a round at a time.
pub struct Trainer<'a> {
    task: &'a dyn Task,
    scheme: &'a Scheme,
    cfg: TrainLoopConfig,
    trial: usize,
    x: BlockedParams,
    optimizer: ServerOptimizer,
    round: usize,
    history: Vec<DeliveryStats>,
    scalars_up: usize,
}

impl<'a> Trainer<'a> {
    /// Fresh model for `trial`; initialisation depends only on the seed and
    /// the trial index.
    pub fn new(task: &'a dyn Task, scheme: &'a Scheme, cfg: TrainLoopConfig, trial: usize) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_from(&[cfg.seed, stream::TRIAL, trial as u64, stream::INIT]);
        let x = task.init_params(&mut rng);
        let optimizer = ServerOptimizer::new(cfg.optimizer, cfg.server_lr, x.len())?;
        Ok(Trainer {
            task,
            scheme,
            cfg,
            trial,
            x,
            optimizer,
            round: 0,
            history: Vec::new(),
            scalars_up: 0,
        })
    }

    pub fn params(&self) -> &BlockedParams {
        &self.x
    }

    pub fn optimizer(&self) -> &ServerOptimizer {
        &self.optimizer
    }

    /// Rounds completed so far.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn delivery_totals(&self) -> DeliveryTotals {
        account_summary(&self.history)
    }

    /// Runs the next round (rounds are numbered from 1).
    pub fn step(&mut self) -> Result<RoundStats> {
        let r = self.round + 1;
        let seed = round_seed(self.cfg.seed, self.trial as u64, r as u64);
        let cohort = sample_cohort(&self.task.client_pool(), self.cfg.cohort_size, seed)?;
        let stats = run_round(
            self.task,
            self.scheme,
            &mut self.x,
            &mut self.optimizer,
            &cohort,
            r,
            seed,
            &self.cfg.round,
        )?;
        self.round = r;
        self.history.push(stats.delivery.clone());
        self.scalars_up += stats.scalars_up;
        Ok(stats)
    }

    fn record(&self, phase: Phase, metric: String, value: f64) -> MetricRecord {
        let totals = self.delivery_totals();
        MetricRecord {
            trial: self.trial,
            round: self.round,
            phase,
            metric,
            value,
            scalars_down: totals.scalars_down,
            scalars_up: self.scalars_up,
            psi_evals: totals.psi_evals,
            wasted_slices: totals.wasted_slices,
            rel_model_size: totals.rel_model_size,
        }
    }

    /// Steps once and returns the round's records: the mean client loss, plus
    /// held-out metrics on evaluation rounds and test metrics after the last.
    pub fn step_with_records(&mut self) -> Result<Vec<MetricRecord>> {
        let stats = self.step()?;
        let mut out = vec![self.record(Phase::Train, "client_loss".into(), stats.mean_client_loss)];
        let last = self.round == self.cfg.rounds;
        if self.round.is_multiple_of(self.cfg.eval_every) || last {
            for (m, v) in self.task.evaluate(&self.x, Split::Valid)? {
                out.push(self.record(Phase::Valid, m.to_string(), v));
            }
        }
        if last {
            for (m, v) in self.task.evaluate(&self.x, Split::Test)? {
                out.push(self.record(Phase::Test, m.to_string(), v));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<MetricRecord>,
    /// Server model at the end of each trial.
    pub final_params: Vec<BlockedParams>,
    pub delivery: Vec<DeliveryTotals>,
}

impl ExperimentResult {
    /// Mean over trials of `metric` in `phase` at `round`.
    pub fn mean_at(&self, phase: Phase, metric: &str, round: usize) -> Option<f64> {
        let vals: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.phase == phase && r.metric == metric && r.round == round)
            .map(|r| r.value)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Rounds at which `metric` was recorded in `phase`, ascending.
    pub fn rounds_with(&self, phase: Phase, metric: &str) -> Vec<usize> {
        let mut rounds: Vec<usize> = self
            .records
            .iter()
            .filter(|r| r.phase == phase && r.metric == metric)
            .map(|r| r.round)
            .collect();
        rounds.sort_unstable();
        rounds.dedup();
        rounds
    }
}

/// Runs `cfg.trials` independent trials of `cfg.rounds` rounds each.
pub fn run_experiment(task: &dyn Task, scheme: &Scheme, cfg: &TrainLoopConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut result = ExperimentResult {
        records: Vec::new(),
        final_params: Vec::new(),
        delivery: Vec::new(),
    };
    for trial in 0..cfg.trials {
        let mut trainer = Trainer::new(task, scheme, *cfg, trial)?;
        for _ in 0..cfg.rounds {
            result.records.extend(trainer.step_with_records()?);
        }
        result.delivery.push(trainer.delivery_totals());
        result.final_params.push(trainer.x);
    }
    Ok(result)
}
