//! Turns a validated config into a task, a training scheme and loop settings.

use fedselect::data::{
    gen_dense_task, gen_sparse_tag_dataset, load_client_shards, DenseExample, FederatedDataset, ShardDataset,
    SparseExample, Split,
};
use fedselect::models::{logreg, mlp, ClientTrainConfig, MlpHead, MlpInput, MlpModel};
use fedselect::selection::{KeyStrategy, SelectPlan};
use fedselect::training::{EvalSets, LogregTask, MlpTask, RoundConfig, Scheme, SelectComponent, Task, TrainLoopConfig};

use crate::config::{ExperimentConfig, Head, ModelConfig, PlanChoice, StrategyChoice, TaskConfig};
use crate::error::CliError;

/// Everything a run needs.
pub struct Experiment {
    pub task: Box<dyn Task>,
    pub scheme: Scheme,
    pub loop_cfg: TrainLoopConfig,
}

enum Data {
    Sparse(Splits<SparseExample>),
    Dense(Splits<DenseExample>),
}

struct Splits<E> {
    train: FederatedDataset<E>,
    valid: Option<FederatedDataset<E>>,
    test: Option<FederatedDataset<E>>,
}

fn load(task: &TaskConfig) -> Result<Data, CliError> {
    match task {
        TaskConfig::SyntheticTag(c) => {
            let s = gen_sparse_tag_dataset(c)?;
            Ok(Data::Sparse(Splits {
                train: s.train,
                valid: Some(s.valid),
                test: Some(s.test),
            }))
        }
        TaskConfig::SyntheticDense(c) => {
            let s = gen_dense_task(c)?;
            Ok(Data::Dense(Splits {
                train: s.train,
                valid: Some(s.valid),
                test: Some(s.test),
            }))
        }
        TaskConfig::ShardPath { train, valid, test } => {
            let load_opt = |p: &Option<std::path::PathBuf>| p.as_deref().map(load_client_shards).transpose();
            let (train, valid, test) = (load_client_shards(train)?, load_opt(valid)?, load_opt(test)?);
            match train {
                ShardDataset::Sparse(train) => {
                    let pick = |d: Option<ShardDataset>| match d {
                        None => Ok(None),
                        Some(ShardDataset::Sparse(d)) => Ok(Some(d)),
                        Some(ShardDataset::Dense(_)) => Err(mixed_kinds()),
                    };
                    Ok(Data::Sparse(harmonize(train, pick(valid)?, pick(test)?, true)?))
                }
                ShardDataset::Dense(train) => {
                    let pick = |d: Option<ShardDataset>| match d {
                        None => Ok(None),
                        Some(ShardDataset::Dense(d)) => Ok(Some(d)),
                        Some(ShardDataset::Sparse(_)) => Err(mixed_kinds()),
                    };
                    Ok(Data::Dense(harmonize(train, pick(valid)?, pick(test)?, false)?))
                }
            }
        }
    }
}

fn mixed_kinds() -> CliError {
    CliError::ConfigConflict("train, valid and test shards must all be sparse or all dense".into())
}

/// Gives every split the same input and label dimensions. Dense feature
/// widths must already agree.
fn harmonize<E>(
    mut train: FederatedDataset<E>,
    mut valid: Option<FederatedDataset<E>>,
    mut test: Option<FederatedDataset<E>>,
    sparse: bool,
) -> Result<Splits<E>, CliError> {
    let others = || valid.iter().chain(test.iter());
    if !sparse && others().any(|d| d.input_dim != train.input_dim) {
        return Err(CliError::ConfigConflict(
            "dense shards disagree on the feature dimension".into(),
        ));
    }
    let input_dim = others().map(|d| d.input_dim).fold(train.input_dim, usize::max);
    let label_dim = others().map(|d| d.label_dim).fold(train.label_dim, usize::max);
    train.split = Split::Train;
    for (d, split) in [(&mut valid, Split::Valid), (&mut test, Split::Test)] {
        if let Some(d) = d {
            d.split = split;
        }
    }
    for d in std::iter::once(&mut train)
        .chain(valid.iter_mut())
        .chain(test.iter_mut())
    {
        d.input_dim = input_dim;
        d.label_dim = label_dim;
    }
    Ok(Splits { train, valid, test })
}

fn strategy(cfg: &ExperimentConfig) -> KeyStrategy {
    let s = &cfg.selection;
    let m = s.m.unwrap_or(0);
    match s.strategy {
        StrategyChoice::All => KeyStrategy::All,
        StrategyChoice::TopM => KeyStrategy::TopM { m },
        StrategyChoice::RandomFromLocal => KeyStrategy::RandomFromLocal { m },
        StrategyChoice::RandomTop => KeyStrategy::RandomTop { m },
        StrategyChoice::UniformRandom => KeyStrategy::UniformRandom {
            m,
            shared_per_round: s.shared_per_round,
        },
        StrategyChoice::Mixed => KeyStrategy::Mixed {
            alpha: s.alpha.unwrap_or(1.0),
        },
    }
}

fn scheme(cfg: &ExperimentConfig, task: &dyn Task, row_block: &str) -> Result<Scheme, CliError> {
    let layout = task.layout();
    let component = |plan: SelectPlan, strategy: KeyStrategy| -> Result<SelectComponent, CliError> {
        if let KeyStrategy::UniformRandom { m, .. } = strategy {
            if m > plan.keyspace() {
                return Err(CliError::ConfigConflict(format!(
                    "m = {m} random keys requested from a keyspace of {}",
                    plan.keyspace()
                )));
            }
        }
        Ok(SelectComponent { plan, strategy })
    };
    let neurons = || SelectPlan::neuron_select(layout, mlp::W1, mlp::B1, mlp::W2);
    let components = match cfg.selection.plan {
        PlanChoice::FullBroadcast => return Ok(Scheme::Baseline),
        PlanChoice::Identity => vec![component(SelectPlan::identity(layout), KeyStrategy::All)?],
        PlanChoice::RowSelect => vec![component(SelectPlan::row_select(layout, row_block)?, strategy(cfg))?],
        PlanChoice::NeuronSelect => vec![component(neurons()?, strategy(cfg))?],
        PlanChoice::RowNeuronSelect => {
            let rows = SelectPlan::row_select(layout, row_block)?;
            let units = neurons()?;
            let alpha = cfg.selection.alpha.unwrap_or(1.0);
            let (structured, random) =
                KeyStrategy::split_mixed(alpha, rows.keyspace(), units.keyspace(), cfg.selection.shared_per_round)?;
            vec![component(rows, structured)?, component(units, random)?]
        }
    };
    Ok(Scheme::select(layout, components)?)
}

fn eval_sets<E>(splits: &mut Splits<E>, metrics: Vec<fedselect::models::Metric>) -> EvalSets<E> {
    EvalSets {
        valid: splits.valid.take(),
        test: splits.test.take(),
        metrics,
    }
}

pub fn loop_config(cfg: &ExperimentConfig) -> TrainLoopConfig {
    let t = &cfg.training;
    TrainLoopConfig {
        rounds: t.rounds,
        cohort_size: t.cohort_size,
        eval_every: t.eval_every,
        trials: t.trials,
        seed: t.seed,
        optimizer: t.optimizer,
        server_lr: t.server_lr,
        round: RoundConfig {
            client: ClientTrainConfig {
                epochs: t.epochs,
                batch_size: t.batch_size,
                lr: t.client_lr,
            },
            normalization: cfg.selection.normalization,
            weighting: t.weighting,
            delivery: cfg.delivery,
        },
    }
}

/// Loads or generates the data and assembles the experiment.
pub fn build(cfg: &ExperimentConfig) -> Result<Experiment, CliError> {
    cfg.validate()?;
    let data = load(&cfg.task)?;
    let sparse = matches!(data, Data::Sparse(_));
    let metrics = cfg.metric_list(sparse)?;
    let (task, row_block): (Box<dyn Task>, &str) = match (data, cfg.model) {
        (Data::Sparse(mut s), ModelConfig::SparseLogreg) => {
            let eval = eval_sets(&mut s, metrics);
            (Box::new(LogregTask::new(s.train, eval)?), logreg::WEIGHTS)
        }
        (Data::Dense(_), ModelConfig::SparseLogreg) => {
            return Err(CliError::ConfigConflict("sparse_logreg needs a sparse task".into()))
        }
        (Data::Sparse(mut s), ModelConfig::Mlp { hidden, embed, head }) => {
            let input = MlpInput::SparseEmbedding {
                vocab: s.train.input_dim,
                embed,
            };
            let model = MlpModel::new(input, hidden, s.train.label_dim, mlp_head(head, MlpHead::Sigmoid))?;
            let eval = eval_sets(&mut s, metrics);
            (Box::new(MlpTask::new(model, s.train, eval)?), mlp::EMBEDDING)
        }
        (Data::Dense(mut s), ModelConfig::Mlp { hidden, head, .. }) => {
            if matches!(cfg.selection.plan, PlanChoice::RowSelect | PlanChoice::RowNeuronSelect) {
                return Err(CliError::ConfigConflict("row selection needs a sparse task".into()));
            }
            let input = MlpInput::Dense { dim: s.train.input_dim };
            let model = MlpModel::new(input, hidden, s.train.label_dim, mlp_head(head, MlpHead::Softmax))?;
            let eval = eval_sets(&mut s, metrics);
            (Box::new(MlpTask::new(model, s.train, eval)?), mlp::EMBEDDING)
        }
    };
    let scheme = scheme(cfg, task.as_ref(), row_block)?;
    Ok(Experiment {
        task,
        scheme,
        loop_cfg: loop_config(cfg),
    })
}

fn mlp_head(head: Option<Head>, default: MlpHead) -> MlpHead {
    match head {
        None => default,
        Some(Head::Softmax) => MlpHead::Softmax,
        Some(Head::Sigmoid) => MlpHead::Sigmoid,
    }
}
