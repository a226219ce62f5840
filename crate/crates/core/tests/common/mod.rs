#![allow(dead_code)]

use fedselect::data::DenseExample;
use fedselect::data::{gen_dense_task, gen_sparse_tag_dataset, SyntheticDenseConfig, SyntheticTagConfig};
use fedselect::delivery::DeliveryMode;
use fedselect::fedcore::DeselectNormalization;
use fedselect::models::{ClientTrainConfig, Metric, MlpHead, MlpInput, MlpModel};
use fedselect::training::{
    ClientWeighting, EvalSets, LogregTask, MlpTask, OptimizerKind, RoundConfig, Scheme, TrainLoopConfig, Trainer,
};

pub fn small_tag_config(clients: usize, vocab: usize, tags: usize, seed: u64) -> SyntheticTagConfig {
    SyntheticTagConfig {
        clients,
        valid_clients: 5,
        test_clients: 5,
        vocab,
        tags,
        topic_size: (vocab / 10).max(5),
        signal_words: vocab / 3,
        seed,
        ..SyntheticTagConfig::default()
    }
}

pub fn logreg_task(cfg: &SyntheticTagConfig) -> LogregTask {
    let splits = gen_sparse_tag_dataset(cfg).unwrap();
    LogregTask::new(
        splits.train,
        EvalSets {
            valid: Some(splits.valid),
            test: Some(splits.test),
            metrics: vec![Metric::RecallAtK(5)],
        },
    )
    .unwrap()
}

pub fn dense_mlp_task(clients: usize, hidden: usize, seed: u64) -> MlpTask<DenseExample> {
    let cfg = SyntheticDenseConfig {
        clients,
        valid_clients: 5,
        test_clients: 5,
        dim: 8,
        classes: 4,
        examples_per_client: (10, 20),
        seed,
        ..SyntheticDenseConfig::default()
    };
    let splits = gen_dense_task(&cfg).unwrap();
    let model = MlpModel::new(MlpInput::Dense { dim: 8 }, hidden, 4, MlpHead::Softmax).unwrap();
    MlpTask::new(
        model,
        splits.train,
        EvalSets {
            valid: Some(splits.valid),
            test: None,
            metrics: vec![Metric::Accuracy],
        },
    )
    .unwrap()
}

pub fn optimizers() -> Vec<(OptimizerKind, f64)> {
    vec![
        (OptimizerKind::Sgd, 1.0),
        (OptimizerKind::adagrad(), 0.1),
        (OptimizerKind::adam(), 0.01),
    ]
}

pub fn loop_config(rounds: usize, cohort: usize, optimizer: OptimizerKind, server_lr: f64) -> TrainLoopConfig {
    TrainLoopConfig {
        rounds,
        cohort_size: cohort,
        eval_every: rounds,
        trials: 1,
        seed: 17,
        optimizer,
        server_lr,
        round: RoundConfig {
            client: ClientTrainConfig {
                epochs: 1,
                batch_size: 8,
                lr: 0.1,
            },
            normalization: DeselectNormalization::Cohort,
            weighting: ClientWeighting::Uniform,
            delivery: DeliveryMode::default(),
        },
    }
}

/// Largest per-round parameter gap between two schemes over `rounds` rounds.
pub fn max_trajectory_gap(task: &dyn fedselect::training::Task, a: &Scheme, b: &Scheme, cfg: TrainLoopConfig) -> f64 {
    let mut ta = Trainer::new(task, a, cfg, 0).unwrap();
    let mut tb = Trainer::new(task, b, cfg, 0).unwrap();
    let start = ta.params().clone();
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.rounds {
        ta.step().unwrap();
        tb.step().unwrap();
        let gap = ta
            .params()
            .values()
            .iter()
            .zip(tb.params().values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        worst = worst.max(gap);
    }
    assert_ne!(ta.params().values(), start.values(), "training never moved the model");
    worst
}
