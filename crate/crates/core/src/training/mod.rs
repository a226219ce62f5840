//! Server optimizers, cohort sampling, training rounds and experiments.

pub mod cohort;
pub mod experiment;
pub mod optimizer;
pub mod round;
pub mod task;

pub use cohort::sample_cohort;
pub use experiment::{run_experiment, ExperimentResult, MetricRecord, Phase, TrainLoopConfig, Trainer};
pub use optimizer::{OptimizerKind, ServerOptimizer};
pub use round::{
    choose_keys, run_round, run_round_baseline, run_round_select, ClientWeighting, RoundConfig, RoundStats, Scheme,
    SelectComponent,
};
pub use task::{EvalSets, FeatureCounts, LogregTask, MlpTask, Task};
