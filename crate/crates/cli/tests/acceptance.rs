//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Pass a substring to run only matching criteria.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use fedselect::data::{gen_dense_task, gen_sparse_tag_dataset, SyntheticDenseConfig, SyntheticTagConfig};
use fedselect::delivery::{account_summary, deliver, CacheScope, DeliveryMode};
use fedselect::fedcore::{
    aggregate_mean, aggregate_mean_deselect, flatten_multikey_plan, flattened_key, fuse_broadcast_into_select,
    merge_select_plans, merged_key, AtClients, ClientId, DeselectNormalization, KeySeq,
};
use fedselect::models::{
    grad_check, GradCheckConfig, LogregObjective, LogregView, MlpHead, MlpInput, MlpModel, MlpObjective, MlpView,
    Objective, SparseLinearModel,
};
use fedselect::seeds::{rng_from, SimRng};
use fedselect::selection::{BlockRole, BlockedParams, SelectPlan};
use fedselect::training::Trainer;
use fedselect_cli::{build, parse_config, run_config, MetricsRow};
use rand::Rng;
use rand_distr::{Distribution, Normal};

type Check = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Duration, Check); 11] = [
        ("1 baseline equivalence", Duration::from_secs(60), baseline_equivalence),
        ("2 support equivalence", Duration::from_secs(60), support_equivalence),
        ("3 deselect mean oracle", Duration::from_secs(10), deselect_oracle),
        ("4 composition laws", Duration::from_secs(10), composition_laws),
        ("5 gradient checks", Duration::from_secs(30), gradient_checks),
        ("6 client model size trend", Duration::from_secs(600), model_size_trend),
        ("7 neuron count trend", Duration::from_secs(600), neuron_trend),
        (
            "8 key strategy ablation",
            Duration::from_secs(600),
            key_strategy_ablation,
        ),
        (
            "9 shared vs independent keys",
            Duration::from_secs(600),
            shared_keys_ablation,
        ),
        ("10 delivery accounting", Duration::from_secs(5), delivery_accounting),
        ("11 determinism", Duration::from_secs(120), determinism),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(d) if took > budget => Err(format!("{d}; over the {}s budget", budget.as_secs())),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{:.1}s]", took.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail} [{:.1}s]", took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn config(text: &str) -> fedselect_cli::ExperimentConfig {
    parse_config(text).unwrap_or_else(|e| panic!("bad acceptance config: {e}\n{text}"))
}

/// Largest parameter gap over all rounds between two configs on one task.
fn trajectory_gap(a: &str, b: &str) -> f64 {
    let (ea, eb) = (build(&config(a)).unwrap(), build(&config(b)).unwrap());
    let mut ta = Trainer::new(ea.task.as_ref(), &ea.scheme, ea.loop_cfg, 0).unwrap();
    let mut tb = Trainer::new(eb.task.as_ref(), &eb.scheme, eb.loop_cfg, 0).unwrap();
    let start = ta.params().clone();
    let mut worst: f64 = 0.0;
    for _ in 0..ea.loop_cfg.rounds {
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
    assert_ne!(ta.params().values(), start.values(), "model never moved");
    worst
}

const OPTIMIZERS: [(&str, f64); 3] = [
    (r#"{"kind": "sgd"}"#, 1.0),
    (r#"{"kind": "adagrad"}"#, 0.1),
    (r#"{"kind": "adam"}"#, 0.01),
];

fn baseline_equivalence() -> Result<String, String> {
    let tasks = [
        (
            "logreg",
            r#"{"kind": "synthetic_tag", "clients": 40, "vocab": 200}"#,
            r#"{"kind": "sparse_logreg"}"#,
        ),
        (
            "mlp",
            r#"{"kind": "synthetic_dense", "clients": 40}"#,
            r#"{"kind": "mlp", "hidden": 16}"#,
        ),
    ];
    let mut worst: f64 = 0.0;
    for (name, task, model) in tasks {
        for (opt, lr) in OPTIMIZERS {
            let cfg = |plan: &str| {
                format!(
                    r#"{{"task": {task}, "model": {model}, "selection": {{"plan": "{plan}"}},
                        "training": {{"rounds": 20, "cohort_size": 8, "server_lr": {lr}, "optimizer": {opt}}}}}"#
                )
            };
            let gap = trajectory_gap(&cfg("full_broadcast"), &cfg("identity"));
            ensure(gap <= 1e-12, || format!("{name} {opt}: max abs diff {gap:e}"))?;
            worst = worst.max(gap);
        }
    }
    Ok(format!(
        "2 tasks x 3 optimizers x 20 rounds, max abs diff {worst:e} <= 1e-12"
    ))
}

fn support_equivalence() -> Result<String, String> {
    let cfg = |sel: &str| {
        format!(
            r#"{{"task": {{"kind": "synthetic_tag", "clients": 30, "vocab": 200, "tags": 10}},
                "model": {{"kind": "sparse_logreg"}}, "selection": {sel},
                "training": {{"rounds": 10, "cohort_size": 10}}}}"#
        )
    };
    let gap = trajectory_gap(
        &cfg(r#"{"plan": "full_broadcast"}"#),
        &cfg(r#"{"plan": "row_select", "strategy": "top_m", "m": 200}"#),
    );
    ensure(gap <= 1e-9, || format!("max abs diff {gap:e}"))?;
    Ok(format!(
        "30 clients, n=200, t=10, 10 rounds, max abs diff {gap:e} <= 1e-9"
    ))
}

fn deselect_oracle() -> Result<String, String> {
    let mut rng = rng_from(&[3, 3, 3]);
    let mut worst: f64 = 0.0;
    let mut with_duplicates = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let cols = rng.random_range(1..=4);
        let pad = rng.random_range(0..=4);
        let rows = rng.random_range(1..=(32 - pad) / cols);
        let s = pad + rows * cols;
        let layout = BlockedParams::new()
            .with_zeros("pad", &[pad], BlockRole::Broadcast)
            .unwrap()
            .with_zeros("w", &[rows, cols], BlockRole::Selectable)
            .unwrap();
        let plan = SelectPlan::row_select(&layout, "w").unwrap();
        let mut ids: Vec<usize> = (0..50).collect();
        let mut keys = Vec::new();
        let mut updates = Vec::new();
        let mut dense = Vec::new();
        for i in 0..n {
            ids.swap(i, rng.random_range(i..50));
            let m = rng.random_range(0..=6);
            let k: Vec<usize> = (0..m).map(|_| rng.random_range(0..rows)).collect();
            if k.iter().collect::<HashSet<_>>().len() < k.len() {
                with_duplicates += 1;
            }
            let u: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..cols).map(|_| rng.random_range(-10.0..10.0)).collect())
                .collect();
            let mut d = vec![0.0; s];
            for (&z, uz) in k.iter().zip(&u) {
                for (c, v) in uz.iter().enumerate() {
                    d[pad + z * cols + c] += v;
                }
            }
            keys.push(KeySeq::from(k));
            updates.push(u);
            dense.push(d);
        }
        let cohort: Vec<ClientId> = ids[..n].iter().map(|&i| ClientId(i)).collect();
        let got = aggregate_mean_deselect(
            &AtClients::new(cohort.clone(), updates).unwrap(),
            &AtClients::new(cohort.clone(), keys).unwrap(),
            &plan,
            DeselectNormalization::Cohort,
        )
        .unwrap()
        .into_inner();
        let want = aggregate_mean(&AtClients::new(cohort, dense).unwrap())
            .unwrap()
            .into_inner();
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max abs diff {worst:e}"))?;
    Ok(format!(
        "1000 instances ({with_duplicates} clients with duplicate keys), max abs diff {worst:e} <= 1e-12"
    ))
}

fn composition_laws() -> Result<String, String> {
    let vals = |n: usize, base: f64| (0..n).map(|i| base + i as f64 * 0.25).collect::<Vec<_>>();
    let x = BlockedParams::new()
        .with_block("a", &[4, 2], BlockRole::Selectable, vals(8, 1.0))
        .unwrap()
        .with_block("b", &[4, 3], BlockRole::Selectable, vals(12, -7.0))
        .unwrap()
        .with_block("w1", &[2, 3], BlockRole::Selectable, vals(6, 20.0))
        .unwrap()
        .with_block("b1", &[3], BlockRole::Selectable, vals(3, 40.0))
        .unwrap()
        .with_block("w2", &[3, 2], BlockRole::Selectable, vals(6, 60.0))
        .unwrap()
        .with_block("y", &[3], BlockRole::Broadcast, vals(3, 100.0))
        .unwrap();
    let plans = [
        SelectPlan::row_select(&x, "a").unwrap(),
        SelectPlan::row_select(&x, "b").unwrap(),
        SelectPlan::neuron_select(&x, "w1", "b1", "w2").unwrap(),
    ];
    let upd =
        |len: usize, seed: usize| -> Vec<f64> { (0..len).map(|i| ((i * 7 + seed * 13) % 11) as f64 - 5.0).collect() };
    let phi = |p: &SelectPlan, u: &[f64], k: usize, out: &mut Vec<f64>| p.deselect_into(u, k, out).unwrap();
    let y = x.block("y").unwrap().range();
    let mut checked = 0;

    for p in &plans {
        let fused = fuse_broadcast_into_select(p, &x, &["y"]).unwrap();
        for k in 0..p.keyspace() {
            let mut want = p.psi(&x, k).unwrap();
            want.extend_from_slice(&x.values()[y.clone()]);
            ensure(fused.psi(&x, k).unwrap() == want, || {
                format!("fuse psi differs at key {k}")
            })?;
            let l = p.slice_len(k).unwrap();
            let u = upd(l + y.len(), k);
            let (mut got, mut want) = (vec![0.0; x.len()], vec![0.0; x.len()]);
            phi(&fused, &u, k, &mut got);
            phi(p, &u[..l], k, &mut want);
            for (w, v) in want[y.clone()].iter_mut().zip(&u[l..]) {
                *w += v;
            }
            ensure(got == want, || format!("fuse phi differs at key {k}"))?;
            checked += 1;
        }
    }
    for (p1, p2) in [(&plans[0], &plans[1]), (&plans[2], &plans[0]), (&plans[1], &plans[2])] {
        let merged = merge_select_plans(p1, p2).unwrap();
        ensure(merged.keyspace() <= 16, || "merged keyspace too large".into())?;
        for k1 in 0..p1.keyspace() {
            for k2 in 0..p2.keyspace() {
                let k = merged_key(k1, k2, p2.keyspace());
                let mut want = p1.psi(&x, k1).unwrap();
                want.extend(p2.psi(&x, k2).unwrap());
                ensure(merged.psi(&x, k).unwrap() == want, || {
                    format!("merge psi differs at ({k1}, {k2})")
                })?;
                let l1 = p1.slice_len(k1).unwrap();
                let u = upd(merged.slice_len(k).unwrap(), k);
                let (mut got, mut want) = (vec![0.0; x.len()], vec![0.0; x.len()]);
                phi(&merged, &u, k, &mut got);
                phi(p1, &u[..l1], k1, &mut want);
                phi(p2, &u[l1..], k2, &mut want);
                ensure(got == want, || format!("merge phi differs at ({k1}, {k2})"))?;
                checked += 1;
            }
        }
    }
    for p in &plans {
        let kk = p.keyspace();
        let flat = flatten_multikey_plan(p, 2).unwrap();
        ensure(flat.keyspace() <= 16, || "flattened keyspace too large".into())?;
        for a in 0..kk {
            for b in 0..kk {
                let k = flattened_key(&[a, b], kk).unwrap();
                let mut want = p.psi(&x, a).unwrap();
                want.extend(p.psi(&x, b).unwrap());
                ensure(flat.psi(&x, k).unwrap() == want, || {
                    format!("flatten psi differs at [{a}, {b}]")
                })?;
                let la = p.slice_len(a).unwrap();
                let u = upd(flat.slice_len(k).unwrap(), k);
                let (mut got, mut want) = (vec![0.0; x.len()], vec![0.0; x.len()]);
                phi(&flat, &u, k, &mut got);
                phi(p, &u[..la], a, &mut want);
                phi(p, &u[la..], b, &mut want);
                ensure(got == want, || format!("flatten phi differs at [{a}, {b}]"))?;
                checked += 1;
            }
        }
    }
    Ok(format!(
        "fuse, merge and flatten identical on all {checked} keys (keyspaces <= 16)"
    ))
}

fn check_gradient(obj: &dyn Objective, params: &[f64], seed: u64) -> Result<(f64, usize), String> {
    let all: Vec<usize> = (0..obj.num_examples()).collect();
    let (_, g) = obj.loss_and_grad(params, &all).unwrap();
    let loss = |p: &[f64]| obj.loss_and_grad(p, &all).unwrap().0;
    let cfg = GradCheckConfig::default();
    let report = grad_check(loss, &g, params, &cfg, &mut rng_from(&[seed]));
    ensure(
        report.passed && report.max_rel_error <= 1e-4 && report.coords_checked >= 100,
        || {
            format!(
                "rel error {:e} over {} coords",
                report.max_rel_error, report.coords_checked
            )
        },
    )?;
    let corrupted: Vec<f64> = g.iter().map(|v| v * 1.01 + 1e-3).collect();
    let control = grad_check(loss, &corrupted, params, &cfg, &mut rng_from(&[seed]));
    ensure(!control.passed, || "corrupted gradient passed".into())?;
    Ok((report.max_rel_error, report.coords_checked))
}

fn random_params(len: usize, rng: &mut SimRng) -> Vec<f64> {
    let n = Normal::new(0.0, 0.5).unwrap();
    (0..len).map(|_| n.sample(rng)).collect()
}

fn gradient_checks() -> Result<String, String> {
    let tag = gen_sparse_tag_dataset(&SyntheticTagConfig {
        clients: 2,
        vocab: 150,
        tags: 6,
        signal_words: 50,
        ..SyntheticTagConfig::default()
    })
    .unwrap();
    let dense = gen_dense_task(&SyntheticDenseConfig {
        clients: 2,
        ..SyntheticDenseConfig::default()
    })
    .unwrap();
    let mut rng = rng_from(&[5]);

    let lr_model = SparseLinearModel::new(150, 6).unwrap();
    let lr = LogregObjective::projected(LogregView::full(&lr_model), &tag.train.clients[0].examples);
    let (e1, n1) = check_gradient(&lr, &random_params(lr.num_params(), &mut rng), 1)?;

    let mlp = MlpModel::new(MlpInput::Dense { dim: 20 }, 16, 10, MlpHead::Softmax).unwrap();
    let obj = MlpObjective::projected(MlpView::full(&mlp), &dense.train.clients[0].examples);
    let (e2, n2) = check_gradient(&obj, mlp.random(&mut rng, 0.5).values(), 2)?;

    let smlp = MlpModel::new(
        MlpInput::SparseEmbedding { vocab: 150, embed: 4 },
        8,
        6,
        MlpHead::Sigmoid,
    )
    .unwrap();
    let sobj = MlpObjective::projected(MlpView::full(&smlp), &tag.train.clients[0].examples);
    let (e3, n3) = check_gradient(&sobj, smlp.random(&mut rng, 0.5).values(), 3)?;

    Ok(format!(
        "max rel error logreg {e1:.1e} ({n1} coords), dense mlp {e2:.1e} ({n2}), sparse mlp {e3:.1e} ({n3}); corrupted controls fail"
    ))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn rows_for(text: &str) -> Vec<MetricsRow> {
    run_config(&config(text), true).unwrap()
}

/// Mean over rows of `metric` in `phase` at each round, for a set of runs.
fn mean_curve(runs: &[Vec<MetricsRow>], phase: &str, metric: &str) -> Vec<(usize, f64)> {
    let rounds: Vec<usize> = {
        let mut r: Vec<usize> = runs[0]
            .iter()
            .filter(|r| r.phase == phase && r.metric == metric)
            .map(|r| r.round)
            .collect();
        r.dedup();
        r
    };
    rounds
        .into_iter()
        .map(|round| {
            let vals: Vec<f64> = runs
                .iter()
                .flat_map(|rows| {
                    rows.iter()
                        .filter(|r| r.phase == phase && r.metric == metric && r.round == round)
                })
                .map(|r| r.value)
                .collect();
            (round, mean(&vals))
        })
        .collect()
}

fn tag_run(seed: u64, selection: &str) -> Vec<MetricsRow> {
    rows_for(&format!(
        r#"{{"task": {{"kind": "synthetic_tag", "seed": {seed}}}, "model": {{"kind": "sparse_logreg"}},
            "selection": {selection},
            "training": {{"rounds": 200, "cohort_size": 10, "eval_every": 20, "seed": {seed}}}}}"#
    ))
}

fn top_m(m: usize) -> String {
    format!(r#"{{"plan": "row_select", "strategy": "top_m", "m": {m}}}"#)
}

const SEEDS: [u64; 3] = [0, 1, 2];

fn final_test(runs: &[Vec<MetricsRow>], metric: &str) -> f64 {
    mean_curve(runs, "test", metric).last().unwrap().1
}

fn model_size_trend() -> Result<String, String> {
    let d = SyntheticTagConfig::default();
    ensure(d.vocab == 500 && d.tags == 10 && d.clients == 100, || {
        "tag task defaults changed".into()
    })?;
    let runs = |m: usize| SEEDS.iter().map(|&s| tag_run(s, &top_m(m))).collect::<Vec<_>>();
    let full = final_test(&runs(500), "recall_at_5");
    let tenth = final_test(&runs(50), "recall_at_5");
    let fiftieth = final_test(&runs(10), "recall_at_5");
    ensure((full - tenth).abs() <= 0.02, || {
        format!("m=n {full:.4} vs m=n/10 {tenth:.4}")
    })?;
    ensure(tenth - fiftieth >= 0.02, || {
        format!("m=n/10 {tenth:.4} vs m=n/50 {fiftieth:.4}")
    })?;
    Ok(format!(
        "mean final recall@5 over 3 seeds: m=n {full:.4}, m=n/10 {tenth:.4}, m=n/50 {fiftieth:.4}"
    ))
}

fn neuron_trend() -> Result<String, String> {
    let mut finals = Vec::new();
    for m in [2usize, 10, 20, 40] {
        let runs: Vec<_> = SEEDS
            .iter()
            .map(|&s| {
                rows_for(&format!(
                    r#"{{"task": {{"kind": "synthetic_dense", "seed": {s}}}, "model": {{"kind": "mlp", "hidden": 40}},
                        "selection": {{"plan": "neuron_select", "strategy": "uniform_random", "m": {m}}},
                        "training": {{"rounds": 200, "cohort_size": 10, "eval_every": 50, "seed": {s}}}}}"#
                ))
            })
            .collect();
        finals.push((m, final_test(&runs, "accuracy")));
    }
    let text: Vec<String> = finals.iter().map(|(m, a)| format!("m={m} {a:.4}")).collect();
    for w in finals.windows(2) {
        ensure(w[1].1 >= w[0].1 - 0.01, || {
            format!("accuracy drops from m={} to m={}: {}", w[0].0, w[1].0, text.join(", "))
        })?;
    }
    Ok(format!("h=40, mean final accuracy over 3 seeds: {}", text.join(", ")))
}

fn key_strategy_ablation() -> Result<String, String> {
    let m = 10;
    let curves: Vec<(&str, Vec<(usize, f64)>)> = ["top_m", "random_from_local", "random_top"]
        .into_iter()
        .map(|strategy| {
            let sel = format!(r#"{{"plan": "row_select", "strategy": "{strategy}", "m": {m}}}"#);
            let runs: Vec<_> = SEEDS.iter().map(|&s| tag_run(s, &sel)).collect();
            (strategy, mean_curve(&runs, "valid", "recall_at_5"))
        })
        .collect();
    for (name, c) in &curves {
        ensure(c.len() == 10 && c.iter().all(|(_, v)| v.is_finite()), || {
            format!("{name} curve incomplete")
        })?;
    }
    let (top, random) = (&curves[0].1, &curves[1].1);
    let worst = top
        .iter()
        .zip(random)
        .map(|((_, t), (_, r))| t - r)
        .fold(f64::INFINITY, f64::min);
    ensure(worst >= -0.01, || {
        format!("Top trails Random by {:.4} at some round", -worst)
    })?;
    let last = |i: usize| curves[i].1.last().unwrap().1;
    Ok(format!(
        "m=n/50, 3 seeds, {} eval rounds; min(Top - Random) = {worst:+.4}; final valid recall@5 Top {:.4}, Random {:.4}, Random-Top {:.4}",
        top.len(),
        last(0),
        last(1),
        last(2)
    ))
}

fn shared_keys_ablation() -> Result<String, String> {
    let mut finals = Vec::new();
    for shared in [true, false] {
        let runs: Vec<_> = SEEDS
            .iter()
            .map(|&s| {
                rows_for(&format!(
                    r#"{{"task": {{"kind": "synthetic_dense", "seed": {s}}}, "model": {{"kind": "mlp", "hidden": 40}},
                        "selection": {{"plan": "neuron_select", "strategy": "uniform_random", "m": 10, "shared_per_round": {shared}}},
                        "training": {{"rounds": 100, "cohort_size": 10, "eval_every": 10, "seed": {s}}}}}"#
                ))
            })
            .collect();
        let curve = mean_curve(&runs, "valid", "accuracy");
        ensure(curve.len() == 10 && curve.iter().all(|(_, v)| v.is_finite()), || {
            format!("shared={shared}: curve incomplete")
        })?;
        finals.push(curve.last().unwrap().1);
    }
    Ok(format!(
        "both curves emitted; final valid accuracy shared {:.4}, independent {:.4}",
        finals[0], finals[1]
    ))
}

fn delivery_accounting() -> Result<String, String> {
    let x = BlockedParams::new()
        .with_block(
            "w",
            &[100, 2],
            BlockRole::Selectable,
            (0..200).map(|i| i as f64 * 0.5).collect(),
        )
        .unwrap();
    let plan = SelectPlan::row_select(&x, "w").unwrap();
    let keys = AtClients::from_values(vec![
        KeySeq::from(vec![1, 2]),
        KeySeq::from(vec![2, 3]),
        KeySeq::from(vec![2]),
    ]);
    let run = |mode| deliver(mode, x.values(), &keys, &plan).unwrap();
    let (s_none, none) = run(DeliveryMode::OnDemand {
        cache: CacheScope::None,
    });
    let (s_cache, cached) = run(DeliveryMode::OnDemand {
        cache: CacheScope::PerRound,
    });
    let (s_pre, pre) = run(DeliveryMode::Pregenerated);
    let (s_bc, bc) = run(DeliveryMode::BroadcastCompute);
    ensure(none.psi_evals == 5, || {
        format!("on-demand psi_evals {}", none.psi_evals)
    })?;
    ensure(cached.psi_evals == 3 && cached.cache_hits == 2, || {
        format!("cached {cached:?}")
    })?;
    ensure(pre.psi_evals == 100 && pre.wasted_slices == 97, || {
        format!("pregenerated {pre:?}")
    })?;
    ensure(bc.scalars_down == vec![200; 3] && bc.psi_evals == 0, || {
        format!("broadcast {bc:?}")
    })?;
    ensure(none.scalars_down == vec![4, 4, 2], || {
        format!("select scalars down {:?}", none.scalars_down)
    })?;

    // bit-identical slices on a random 8-row model
    let mut rng = rng_from(&[8]);
    let x8 = BlockedParams::new()
        .with_block(
            "w",
            &[8, 3],
            BlockRole::Selectable,
            (0..24).map(|_| rng.random::<f64>()).collect(),
        )
        .unwrap();
    let p8 = SelectPlan::row_select(&x8, "w").unwrap();
    let k8 = AtClients::from_values(
        (0..4)
            .map(|_| KeySeq::from((0..3).map(|_| rng.random_range(0..8)).collect::<Vec<_>>()))
            .collect(),
    );
    let modes = [
        DeliveryMode::BroadcastCompute,
        DeliveryMode::OnDemand {
            cache: CacheScope::None,
        },
        DeliveryMode::OnDemand {
            cache: CacheScope::PerRound,
        },
        DeliveryMode::Pregenerated,
    ];
    let slices: Vec<_> = modes
        .iter()
        .map(|&m| deliver(m, x8.values(), &k8, &p8).unwrap().0)
        .collect();
    let bits = |s: &AtClients<Vec<Vec<f64>>>| -> Vec<u64> {
        s.values().iter().flatten().flatten().map(|v| v.to_bits()).collect()
    };
    ensure(slices.iter().all(|s| bits(s) == bits(&slices[0])), || {
        "modes disagree on slice values".into()
    })?;
    ensure(
        [&s_none, &s_cache, &s_pre, &s_bc]
            .iter()
            .all(|s| bits(s) == bits(&s_none)),
        || "modes disagree on the constructed cohort".into(),
    )?;
    let totals = account_summary(&[none.clone(), cached.clone()]);
    ensure(totals.psi_evals == 8, || {
        format!("summary psi_evals {}", totals.psi_evals)
    })?;
    Ok("psi_evals 5 / 3 / 100 with 97 wasted; broadcast-compute sends s=200 per client; slices bit-identical across modes".into())
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"task": {"kind": "synthetic_tag", "clients": 30, "vocab": 150},
            "model": {"kind": "sparse_logreg"},
            "selection": {"plan": "row_select", "strategy": "random_top", "m": 10},
            "delivery": {"kind": "pregenerated"},
            "training": {"rounds": 15, "cohort_size": 5, "eval_every": 5, "trials": 2}}"#,
    )
    .map_err(|e| e.to_string())?;
    let run = |out: &str| -> Result<Vec<u8>, String> {
        let out = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_fedselect"))
            .arg("--config")
            .arg(&cfg)
            .arg("--seed")
            .arg("11")
            .arg("--output-dir")
            .arg(&out)
            .arg("--quiet")
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("exit status {status}"))?;
        std::fs::read(out.join("metrics.csv")).map_err(|e| e.to_string())
    };
    let (a, b) = (run("a")?, run("b")?);
    ensure(a == b, || "metrics.csv differs between invocations".into())?;
    let lines = a.iter().filter(|&&c| c == b'\n').count();
    Ok(format!(
        "two invocations wrote byte-identical metrics.csv ({} bytes, {lines} lines)",
        a.len()
    ))
}
