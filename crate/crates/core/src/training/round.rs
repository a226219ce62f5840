//! One training round, with or without federated select.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delivery::{deliver_many, DeliveryMode, DeliveryStats, SelectRequest};
use crate::error::{Error, Result};
use crate::fedcore::{
    aggregate_mean, aggregate_mean_deselect_with, AtClients, ClientId, Deselect, DeselectNormalization, KeySeq,
};
use crate::models::{client_update_model_delta, ClientTrainConfig, ClientUpdate};
use crate::seeds::{rng_from, stream};
use crate::selection::{BlockRef, BlockedParams, KeyStrategy, PlanKind, SelectPlan};
use crate::training::optimizer::ServerOptimizer;
use crate::training::task::Task;

/// How client updates are weighted in the server mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientWeighting {
    #[default]
    Uniform,
    /// Proportional to the client's example count.
    ExampleCount,
}

/// Knobs shared by every round of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundConfig {
    pub client: ClientTrainConfig,
    pub normalization: DeselectNormalization,
    pub weighting: ClientWeighting,
    pub delivery: DeliveryMode,
}

/// A select plan and the strategy clients use to pick its keys.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectComponent {
    pub plan: SelectPlan,
    pub strategy: KeyStrategy,
}

impl SelectComponent {
    /// Block whose per-client counts feed a structured strategy.
    fn counts_block(&self) -> Result<Option<String>> {
        if !self.strategy.is_structured() {
            return Ok(None);
        }
        match self.plan.kind() {
            PlanKind::RowSelect { block, .. } => Ok(Some(block.name.clone())),
            other => Err(Error::BadConfig(format!(
                "structured keys need a row select plan, got {}",
                plan_name(other)
            ))),
        }
    }
}

fn plan_name(kind: &PlanKind) -> &'static str {
    match kind {
        PlanKind::Identity { .. } => "identity",
        PlanKind::RowSelect { .. } => "row select",
        PlanKind::BlockSelect { .. } => "block select",
        PlanKind::NeuronSelect { .. } => "neuron select",
        PlanKind::Fused { .. } => "fused",
        PlanKind::Merged { .. } => "merged",
        PlanKind::Flattened { .. } => "flattened",
    }
}

/// Which training algorithm a run uses.
#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    /// Broadcast the whole model, average full updates.
    Baseline,
    /// Select slices per component, broadcast the remaining blocks, and fold
    /// updates back with the deselect mean.
    Select {
        components: Vec<SelectComponent>,
        broadcast: Vec<BlockRef>,
    },
}

impl Scheme {
    /// Select scheme over `components`; every block no component reads is
    /// broadcast. Components must read disjoint blocks.
    pub fn select(layout: &BlockedParams, components: Vec<SelectComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::BadConfig("a select scheme needs at least one plan".into()));
        }
        let mut used = std::collections::HashSet::new();
        for c in &components {
            if c.plan.model_len() != layout.len() {
                return Err(Error::ShapeMismatch("plan built for a different model".into()));
            }
            if matches!(c.strategy, KeyStrategy::Mixed { .. }) {
                return Err(Error::BadConfig(
                    "split mixed strategies into their two parts first".into(),
                ));
            }
            c.counts_block()?;
            for b in c.plan.blocks() {
                if !used.insert(b.clone()) {
                    return Err(Error::BlockCollision(b));
                }
            }
        }
        let broadcast = layout
            .blocks()
            .iter()
            .filter(|b| !used.contains(&b.name))
            .map(BlockRef::from)
            .collect();
        Ok(Scheme::Select { components, broadcast })
    }
}

/// Accounting and diagnostics of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundStats {
    pub round: usize,
    pub cohort: Vec<ClientId>,
    pub delivery: DeliveryStats,
    /// Scalars uploaded by all clients.
    pub scalars_up: usize,
    /// Mean over clients of their mean minibatch loss.
    pub mean_client_loss: f64,
}

impl RoundStats {
    pub fn scalars_down(&self) -> usize {
        self.delivery.scalars_down_total()
    }

    pub fn rel_model_size(&self) -> f64 {
        self.delivery.max_client_params as f64 / self.delivery.model_len as f64
    }
}

struct ClientResult {
    update: ClientUpdate,
}

/// Runs one round of `scheme` on `x` with the given cohort and updates `x`
/// through `optimizer`.
#[allow(clippy::too_many_arguments)]
pub fn run_round(
    task: &dyn Task,
    scheme: &Scheme,
    x: &mut BlockedParams,
    optimizer: &mut ServerOptimizer,
    cohort: &[ClientId],
    round: usize,
    round_seed: u64,
    cfg: &RoundConfig,
) -> Result<RoundStats> {
    if cohort.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let weights = client_weights(task, cohort, cfg.weighting)?;
    let train_rng = |id: ClientId| rng_from(&[round_seed, stream::CLIENT_TRAIN, id.0 as u64]);

    let mut chosen = Vec::new();
    let (results, delivery) = match scheme {
        Scheme::Baseline => {
            let y0 = x.values();
            let results = cohort
                .par_iter()
                .map(|&id| {
                    let obj = task.objective(id, None)?;
                    let update = client_update_model_delta(y0, obj.as_ref(), &cfg.client, &mut train_rng(id))?;
                    Ok(ClientResult { update })
                })
                .collect::<Result<Vec<_>>>()?;
            (results, DeliveryStats::full_broadcast(x.len(), cohort.len()))
        }
        Scheme::Select { components, broadcast } => {
            let keys = choose_keys(task, components, cohort, round_seed)?;
            let requests: Vec<SelectRequest<'_>> = components
                .iter()
                .zip(&keys)
                .map(|(c, k)| SelectRequest { plan: &c.plan, keys: k })
                .collect();
            let broadcast_len = broadcast.iter().map(|b| b.len).sum();
            let (slices, delivery) = deliver_many(cfg.delivery, x.values(), &requests, broadcast_len)?;
            let xv = x.values();
            let results = (0..cohort.len())
                .into_par_iter()
                .map(|pos| {
                    let id = cohort[pos];
                    let mut y0 = Vec::new();
                    let mut gather = Vec::new();
                    for ((c, k), s) in components.iter().zip(&keys).zip(&slices) {
                        for (&key, slice) in k.values()[pos].iter().zip(&s.values()[pos]) {
                            y0.extend_from_slice(slice);
                            gather.extend(c.plan.coords(key)?.into_iter().map(|co| co.index));
                        }
                    }
                    for b in broadcast {
                        y0.extend_from_slice(&xv[b.offset..b.offset + b.len]);
                        gather.extend(b.offset..b.offset + b.len);
                    }
                    let obj = task.objective(id, Some(&gather))?;
                    let update = client_update_model_delta(&y0, obj.as_ref(), &cfg.client, &mut train_rng(id))?;
                    Ok(ClientResult { update })
                })
                .collect::<Result<Vec<_>>>()?;
            chosen = keys;
            (results, delivery)
        }
    };

    let scalars_up = results.iter().map(|r| r.update.delta.len()).sum();
    let mean_client_loss = results.iter().map(|r| r.update.mean_loss).sum::<f64>() / results.len() as f64;
    let deltas: Vec<Vec<f64>> = results
        .iter()
        .zip(&weights)
        .map(|(r, w)| match w {
            Some(w) => r.update.delta.iter().map(|u| u * w).collect(),
            None => r.update.delta.clone(),
        })
        .collect();

    let u = match scheme {
        Scheme::Baseline => aggregate_mean(&AtClients::new(cohort.to_vec(), deltas)?)?.into_inner(),
        Scheme::Select { components, broadcast } => {
            aggregate_mean_deselect_with(cohort, x.len(), cfg.normalization, |pos, buf, touched| {
                // the local vector is laid out as [slices of every component | broadcast blocks]
                let delta = &deltas[pos];
                let mut offset = 0;
                for (c, keys) in components.iter().zip(&chosen) {
                    for &k in keys.values()[pos].iter() {
                        let len = c.plan.slice_len(k)?;
                        c.plan.deselect_into(&delta[offset..offset + len], k, buf)?;
                        c.plan.mark_touched(k, touched)?;
                        offset += len;
                    }
                }
                for b in broadcast {
                    for (dst, &v) in buf[b.offset..b.offset + b.len]
                        .iter_mut()
                        .zip(&delta[offset..offset + b.len])
                    {
                        *dst += v;
                    }
                    touched.mark_range(b.offset..b.offset + b.len);
                    offset += b.len;
                }
                Ok(())
            })?
        }
    };
    optimizer.update(x.values_mut(), &u)?;

    Ok(RoundStats {
        round,
        cohort: cohort.to_vec(),
        delivery,
        scalars_up,
        mean_client_loss,
    })
}

/// Per-component key sequences for every cohort member.
pub fn choose_keys(
    task: &dyn Task,
    components: &[SelectComponent],
    cohort: &[ClientId],
    round_seed: u64,
) -> Result<Vec<AtClients<KeySeq>>> {
    components
        .iter()
        .enumerate()
        .map(|(ci, c)| {
            let counts_block = c.counts_block()?;
            let seqs = cohort
                .iter()
                .map(|&id| {
                    let counts = counts_block.as_deref().map(|b| task.key_counts(id, b)).transpose()?;
                    let mut rng = rng_from(&[round_seed, stream::CLIENT_KEYS, id.0 as u64, ci as u64]);
                    let shared_seed = crate::seeds::derive_seed(&[round_seed, ci as u64]);
                    c.strategy
                        .choose(c.plan.keyspace(), counts.as_ref(), &mut rng, shared_seed)
                        .map_err(|e| match e {
                            Error::KeyOutOfRange {
                                position,
                                key,
                                keyspace,
                                ..
                            } => Error::KeyOutOfRange {
                                client: id.0,
                                position,
                                key,
                                keyspace,
                            },
                            other => other,
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            AtClients::new(cohort.to_vec(), seqs)
        })
        .collect()
}

/// `None` for uniform weighting; otherwise `N * |D_n| / sum |D|` so that the
/// division by `N` yields the example-weighted mean.
fn client_weights(task: &dyn Task, cohort: &[ClientId], weighting: ClientWeighting) -> Result<Vec<Option<f64>>> {
    match weighting {
        ClientWeighting::Uniform => Ok(vec![None; cohort.len()]),
        ClientWeighting::ExampleCount => {
            let sizes = cohort
                .iter()
                .map(|&id| task.num_examples(id))
                .collect::<Result<Vec<_>>>()?;
            let total: usize = sizes.iter().sum();
            let n = cohort.len() as f64;
            Ok(sizes.into_iter().map(|s| Some(n * s as f64 / total as f64)).collect())
        }
    }
}

/// Round without federated select: full broadcast, plain mean.
pub fn run_round_baseline(
    task: &dyn Task,
    x: &mut BlockedParams,
    optimizer: &mut ServerOptimizer,
    cohort: &[ClientId],
    round_seed: u64,
    cfg: &RoundConfig,
) -> Result<RoundStats> {
    run_round(task, &Scheme::Baseline, x, optimizer, cohort, 0, round_seed, cfg)
}

/// Round with a single select plan and key strategy.
#[allow(clippy::too_many_arguments)]
pub fn run_round_select(
    task: &dyn Task,
    plan: &SelectPlan,
    strategy: KeyStrategy,
    x: &mut BlockedParams,
    optimizer: &mut ServerOptimizer,
    cohort: &[ClientId],
    round_seed: u64,
    cfg: &RoundConfig,
) -> Result<RoundStats> {
    let scheme = Scheme::select(
        task.layout(),
        vec![SelectComponent {
            plan: plan.clone(),
            strategy,
        }],
    )?;
    run_round(task, &scheme, x, optimizer, cohort, 0, round_seed, cfg)
}
