//! Select-path training against full-model training on identical seeds.

mod common;

use common::*;
use fedselect::data::{ClientData, FederatedDataset, SparseExample, Split};
use fedselect::fedcore::ClientId;
use fedselect::models::{client_update_model_delta, ClientTrainConfig, Metric, MlpHead, MlpInput, MlpModel};
use fedselect::seeds::{rng_from, stream};
use fedselect::selection::{KeyStrategy, SelectPlan};
use fedselect::training::{
    run_round_baseline, run_round_select, EvalSets, LogregTask, MlpTask, OptimizerKind, Scheme, SelectComponent,
    ServerOptimizer, Task,
};

fn identity_scheme(task: &dyn Task) -> Scheme {
    Scheme::select(
        task.layout(),
        vec![SelectComponent {
            plan: SelectPlan::identity(task.layout()),
            strategy: KeyStrategy::All,
        }],
    )
    .unwrap()
}

#[test]
fn identity_plan_reproduces_baseline_on_logreg() {
    let task = logreg_task(&small_tag_config(20, 60, 4, 3));
    let select = identity_scheme(&task);
    for (opt, lr) in optimizers() {
        let gap = max_trajectory_gap(&task, &Scheme::Baseline, &select, loop_config(20, 5, opt, lr));
        assert!(gap <= 1e-12, "{opt:?}: gap {gap:e}");
    }
}

#[test]
fn identity_plan_reproduces_baseline_on_mlp() {
    let task = dense_mlp_task(20, 6, 4);
    let select = identity_scheme(&task);
    for (opt, lr) in optimizers() {
        let gap = max_trajectory_gap(&task, &Scheme::Baseline, &select, loop_config(20, 5, opt, lr));
        assert!(gap <= 1e-12, "{opt:?}: gap {gap:e}");
    }
}

#[test]
fn full_support_keys_reproduce_baseline_on_logreg() {
    let task = logreg_task(&small_tag_config(30, 200, 10, 5));
    let plan = SelectPlan::row_select(task.layout(), "w").unwrap();
    let select = Scheme::select(
        task.layout(),
        vec![SelectComponent {
            plan,
            strategy: KeyStrategy::TopM { m: 200 },
        }],
    )
    .unwrap();
    for (opt, lr) in optimizers() {
        let gap = max_trajectory_gap(&task, &Scheme::Baseline, &select, loop_config(10, 10, opt, lr));
        assert!(gap <= 1e-9, "{opt:?}: gap {gap:e}");
    }
}

#[test]
fn unit_mixing_weight_recovers_training_without_select() {
    let splits = fedselect::data::gen_sparse_tag_dataset(&small_tag_config(12, 80, 4, 9)).unwrap();
    let model = MlpModel::new(
        MlpInput::SparseEmbedding { vocab: 80, embed: 4 },
        6,
        4,
        MlpHead::Sigmoid,
    )
    .unwrap();
    let task = MlpTask::new(
        model,
        splits.train,
        EvalSets {
            valid: None,
            test: None,
            metrics: vec![Metric::RecallAtK(2)],
        },
    )
    .unwrap();
    let (structured, random) = KeyStrategy::split_mixed(1.0, 80, 6, false).unwrap();
    let select = Scheme::select(
        task.layout(),
        vec![
            SelectComponent {
                plan: SelectPlan::row_select(task.layout(), "emb").unwrap(),
                strategy: structured,
            },
            SelectComponent {
                plan: SelectPlan::neuron_select(task.layout(), "w1", "b1", "w2").unwrap(),
                strategy: random,
            },
        ],
    )
    .unwrap();
    let gap = max_trajectory_gap(
        &task,
        &Scheme::Baseline,
        &select,
        loop_config(8, 4, OptimizerKind::adam(), 0.01),
    );
    assert!(gap <= 1e-9, "gap {gap:e}");
}

#[test]
fn identity_plan_single_client_recovers_local_model() {
    let task = logreg_task(&small_tag_config(6, 40, 3, 1));
    let cfg = loop_config(1, 1, OptimizerKind::Sgd, 1.0).round;
    let id = task.client_pool()[2];
    let x0 = task.layout().clone();
    let seed = 99;

    // oracle: train the client directly on the full model
    let obj = task.objective(id, None).unwrap();
    let mut rng = rng_from(&[seed, stream::CLIENT_TRAIN, id.0 as u64]);
    let upd = client_update_model_delta(x0.values(), obj.as_ref(), &cfg.client, &mut rng).unwrap();
    let local: Vec<f64> = x0.values().iter().zip(&upd.delta).map(|(x, u)| x - u).collect();

    let mut x = x0.clone();
    let mut opt = ServerOptimizer::new(OptimizerKind::Sgd, 1.0, x.len()).unwrap();
    let plan = SelectPlan::identity(task.layout());
    run_round_select(&task, &plan, KeyStrategy::All, &mut x, &mut opt, &[id], seed, &cfg).unwrap();
    for (a, b) in x.values().iter().zip(&local) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn zero_client_rate_is_a_fixed_point_for_every_optimizer() {
    let task = dense_mlp_task(8, 4, 2);
    let mut cfg = loop_config(1, 4, OptimizerKind::Sgd, 1.0).round;
    cfg.client.lr = 0.0;
    let x0 = task.init_params(&mut rng_from(&[1]));
    for (kind, lr) in optimizers() {
        let mut x = x0.clone();
        let mut opt = ServerOptimizer::new(kind, lr, x.len()).unwrap();
        let cohort = &task.client_pool()[..4];
        run_round_baseline(&task, &mut x, &mut opt, cohort, 5, &cfg).unwrap();
        assert_eq!(x.values(), x0.values(), "{kind:?}");
    }
}

#[test]
fn baseline_round_accounting_and_single_step() {
    let task = logreg_task(&small_tag_config(6, 30, 3, 4));
    let mut cfg = loop_config(1, 3, OptimizerKind::Sgd, 1.0).round;
    cfg.client.batch_size = 1000;
    let mut x = task.layout().clone();
    let mut opt = ServerOptimizer::new(OptimizerKind::Sgd, 1.0, x.len()).unwrap();
    let pool = task.client_pool();
    let stats = run_round_baseline(&task, &mut x, &mut opt, &pool[..3], 1, &cfg).unwrap();
    assert_eq!(stats.scalars_down(), task.layout().len() * 3);
    assert_eq!(stats.scalars_up, task.layout().len() * 3);

    // one full-batch step: x' = x - gamma * grad f(x)
    let mut x = task.layout().clone();
    let mut opt = ServerOptimizer::new(OptimizerKind::Sgd, 1.0, x.len()).unwrap();
    run_round_baseline(&task, &mut x, &mut opt, &pool[..1], 1, &cfg).unwrap();
    let obj = task.objective(pool[0], None).unwrap();
    let all: Vec<usize> = (0..obj.num_examples()).collect();
    let (_, g) = obj.loss_and_grad(task.layout().values(), &all).unwrap();
    for ((a, x0), gi) in x.values().iter().zip(task.layout().values()).zip(&g) {
        assert!((a - (x0 - cfg.client.lr * gi)).abs() <= 1e-15);
    }
}

#[test]
fn two_identical_clients_match_one() {
    let ex = |f: Vec<usize>, l: Vec<usize>| SparseExample::indicator(f, l).unwrap();
    let examples = vec![
        ex(vec![0, 2], vec![1]),
        ex(vec![1, 3], vec![0]),
        ex(vec![2], vec![0, 1]),
    ];
    let train = FederatedDataset {
        clients: vec![
            ClientData {
                id: ClientId(0),
                examples: examples.clone(),
            },
            ClientData {
                id: ClientId(1),
                examples,
            },
        ],
        input_dim: 4,
        label_dim: 2,
        split: Split::Train,
    };
    let task = LogregTask::new(
        train,
        EvalSets {
            valid: None,
            test: None,
            metrics: vec![],
        },
    )
    .unwrap();
    let cfg = fedselect::training::RoundConfig {
        client: ClientTrainConfig {
            epochs: 1,
            batch_size: 3,
            lr: 0.5,
        },
        ..loop_config(1, 1, OptimizerKind::Sgd, 1.0).round
    };
    let run = |cohort: &[ClientId]| {
        let mut x = task.layout().clone();
        let mut opt = ServerOptimizer::new(OptimizerKind::Sgd, 1.0, x.len()).unwrap();
        run_round_baseline(&task, &mut x, &mut opt, cohort, 3, &cfg).unwrap();
        x
    };
    assert_eq!(run(&[ClientId(0), ClientId(1)]).values(), run(&[ClientId(0)]).values());
}
