//! Experiment configuration: a JSON document with every knob defaulted.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use fedselect::data::{SyntheticDenseConfig, SyntheticTagConfig};
use fedselect::delivery::DeliveryMode;
use fedselect::fedcore::DeselectNormalization;
use fedselect::models::Metric;
use fedselect::training::{ClientWeighting, OptimizerKind};

use crate::error::CliError;

/// Midpoint of the learning-rate grid `{10^i : -3 <= i <= 1}`.
pub const GRID_MIDPOINT_LR: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub delivery: DeliveryMode,
    /// Metric names such as `accuracy` or `recall_at_5`; empty picks the
    /// task's default.
    #[serde(default)]
    pub metrics: Vec<String>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("fedselect-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    SyntheticTag(SyntheticTagConfig),
    SyntheticDense(SyntheticDenseConfig),
    /// Directories of `.fdc` client shards.
    ShardPath {
        train: PathBuf,
        #[serde(default)]
        valid: Option<PathBuf>,
        #[serde(default)]
        test: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Softmax,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    SparseLogreg,
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: usize,
        /// Embedding width for sparse inputs; ignored for dense ones.
        #[serde(default = "default_embed")]
        embed: usize,
        /// Defaults to sigmoid on multi-label tasks and softmax otherwise.
        #[serde(default)]
        head: Option<Head>,
    },
}

fn default_hidden() -> usize {
    40
}

fn default_embed() -> usize {
    8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanChoice {
    /// No select at all: every client receives the whole model.
    #[default]
    FullBroadcast,
    /// One key selecting the whole model.
    Identity,
    /// Rows of the sparse input block (logreg weights or MLP embedding).
    RowSelect,
    /// Hidden units of the MLP.
    NeuronSelect,
    /// Embedding rows and hidden units, for mixed keys.
    RowNeuronSelect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyChoice {
    #[default]
    All,
    TopM,
    RandomFromLocal,
    RandomTop,
    UniformRandom,
    Mixed,
}

impl StrategyChoice {
    fn is_structured(self) -> bool {
        matches!(
            self,
            StrategyChoice::TopM | StrategyChoice::RandomFromLocal | StrategyChoice::RandomTop
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub plan: PlanChoice,
    pub strategy: StrategyChoice,
    pub m: Option<usize>,
    pub alpha: Option<f64>,
    pub shared_per_round: bool,
    pub normalization: DeselectNormalization,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub rounds: usize,
    pub cohort_size: usize,
    pub client_lr: f64,
    pub server_lr: f64,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub eval_every: usize,
    pub trials: usize,
    pub seed: u64,
    pub weighting: ClientWeighting,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            rounds: 100,
            cohort_size: 10,
            client_lr: GRID_MIDPOINT_LR,
            server_lr: GRID_MIDPOINT_LR,
            optimizer: OptimizerKind::adagrad(),
            epochs: 1,
            batch_size: 8,
            eval_every: 10,
            trials: 1,
            seed: 0,
            weighting: ClientWeighting::Uniform,
        }
    }
}

/// Command-line values applied on top of the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rounds: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl TaskConfig {
    /// Whether examples are sparse bags of features. Shard directories are
    /// only known after loading.
    pub fn is_sparse(&self) -> Option<bool> {
        match self {
            TaskConfig::SyntheticTag(_) => Some(true),
            TaskConfig::SyntheticDense(_) => Some(false),
            TaskConfig::ShardPath { .. } => None,
        }
    }
}

impl ExperimentConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.training.seed = seed;
        }
        if let Some(rounds) = o.rounds {
            self.training.rounds = rounds;
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
    }

    pub fn metric_list(&self, sparse: bool) -> Result<Vec<Metric>, CliError> {
        if self.metrics.is_empty() {
            return Ok(vec![if sparse { Metric::RecallAtK(5) } else { Metric::Accuracy }]);
        }
        self.metrics
            .iter()
            .map(|m| {
                m.parse()
                    .map_err(|_| CliError::ConfigConflict(format!("unknown metric `{m}`")))
            })
            .collect()
    }

    /// Cross-field checks that do not need the data.
    pub fn validate(&self) -> Result<(), CliError> {
        let conflict = |msg: String| Err(CliError::ConfigConflict(msg));
        let t = &self.training;
        if t.rounds == 0 {
            return conflict("training.rounds must be at least 1".into());
        }
        if t.cohort_size == 0 || t.trials == 0 || t.eval_every == 0 || t.epochs == 0 || t.batch_size == 0 {
            return conflict("cohort_size, trials, eval_every, epochs and batch_size must be at least 1".into());
        }
        if !(t.client_lr >= 0.0 && t.client_lr.is_finite() && t.server_lr >= 0.0 && t.server_lr.is_finite()) {
            return conflict("learning rates must be finite and non-negative".into());
        }
        if let Err(e) = t.optimizer.validate() {
            return conflict(e.to_string());
        }

        let sparse = self.task.is_sparse();
        let mlp = matches!(self.model, ModelConfig::Mlp { .. });
        if let ModelConfig::Mlp { hidden, embed, .. } = self.model {
            if hidden == 0 || embed == 0 {
                return conflict("mlp hidden and embed sizes must be at least 1".into());
            }
        }
        if !mlp && sparse == Some(false) {
            return conflict("sparse_logreg needs a sparse task".into());
        }

        let s = &self.selection;
        let plan_ok = match s.plan {
            PlanChoice::FullBroadcast | PlanChoice::Identity => {
                if s.strategy != StrategyChoice::All {
                    return conflict(format!("{:?} plans take every key; strategy must be `all`", s.plan));
                }
                true
            }
            PlanChoice::RowSelect => sparse != Some(false),
            PlanChoice::NeuronSelect => mlp,
            PlanChoice::RowNeuronSelect => mlp && sparse != Some(false),
        };
        if !plan_ok {
            return conflict(format!("plan {:?} does not fit the configured task and model", s.plan));
        }
        if s.strategy.is_structured() && (mlp || s.plan != PlanChoice::RowSelect) {
            return conflict("structured key strategies need row_select on sparse_logreg".into());
        }
        if (s.strategy == StrategyChoice::Mixed) != (s.plan == PlanChoice::RowNeuronSelect) {
            return conflict("the mixed strategy goes with, and only with, row_neuron_select".into());
        }
        if s.strategy == StrategyChoice::All && !matches!(s.plan, PlanChoice::FullBroadcast | PlanChoice::Identity) {
            return conflict("strategy `all` is only meaningful for full_broadcast and identity".into());
        }
        let needs_m = !matches!(s.strategy, StrategyChoice::All | StrategyChoice::Mixed);
        match (needs_m, s.m) {
            (true, None) => return conflict(format!("strategy {:?} needs `m`", s.strategy)),
            (true, Some(0)) => return conflict("m must be at least 1".into()),
            (false, Some(_)) => return conflict(format!("strategy {:?} takes no `m`", s.strategy)),
            _ => {}
        }
        match (s.strategy == StrategyChoice::Mixed, s.alpha) {
            (true, None) => return conflict("the mixed strategy needs `alpha`".into()),
            (true, Some(a)) if !(a > 0.0 && a <= 1.0) => return conflict(format!("alpha must lie in (0, 1], got {a}")),
            (false, Some(_)) => return conflict("only the mixed strategy takes `alpha`".into()),
            _ => {}
        }
        if s.shared_per_round && !matches!(s.strategy, StrategyChoice::UniformRandom | StrategyChoice::Mixed) {
            return conflict("shared_per_round applies to random keys only".into());
        }
        if let Some(sp) = sparse {
            self.metric_list(sp)?;
        }
        Ok(())
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.to_string();
        match unknown_field(&msg) {
            Some(field) if path == "." => CliError::UnknownKey(field),
            Some(field) if path == field || path.ends_with(&format!(".{field}")) => CliError::UnknownKey(path),
            Some(field) => CliError::UnknownKey(format!("{path}.{field}")),
            None => CliError::Parse(if path == "." { msg } else { format!("{path}: {msg}") }),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Field name out of serde's "unknown field `x`, expected ..." message.
fn unknown_field(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}
