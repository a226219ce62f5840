//! Slice delivery strategies and their cost accounting.
//!
//! * `BroadcastCompute`: the server ships the whole model; clients evaluate
//!   `psi` themselves, so the server never learns their keys.
//! * `OnDemand`: the server evaluates `psi` per request, optionally caching
//!   slices within the round.
//! * `Pregenerated`: the server materialises all `K` slices up front and
//!   clients fetch theirs; unrequested slices are wasted work.
//!
//! Every mode returns the same slice values; only the counters differ.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fedcore::{AtClients, KeySeq, SelectKey};
use crate::selection::{PlanKind, SelectPlan};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheScope {
    #[default]
    None,
    /// Each distinct key is served from one `psi` evaluation per round.
    PerRound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeliveryMode {
    BroadcastCompute,
    OnDemand {
        #[serde(default)]
        cache: CacheScope,
    },
    Pregenerated,
}

impl Default for DeliveryMode {
    fn default() -> Self {
        DeliveryMode::OnDemand {
            cache: CacheScope::None,
        }
    }
}

impl DeliveryMode {
    pub fn keys_visible_to_server(&self) -> bool {
        !matches!(self, DeliveryMode::BroadcastCompute)
    }
}

/// Counters for one round of delivery.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryStats {
    /// `psi` evaluations performed by the server.
    pub psi_evals: usize,
    /// `psi` evaluations performed on clients (broadcast-and-compute only).
    pub client_psi_evals: usize,
    /// Scalars sent to each client, in cohort order.
    pub scalars_down: Vec<usize>,
    /// Pre-generated slices nobody requested.
    pub wasted_slices: usize,
    pub cache_hits: usize,
    pub keys_visible_to_server: bool,
    /// Largest local model any client trains.
    pub max_client_params: usize,
    /// Scalar count `s` of the server model.
    pub model_len: usize,
}

impl DeliveryStats {
    pub fn scalars_down_total(&self) -> usize {
        self.scalars_down.iter().sum()
    }

    /// Accounting for a round that broadcasts the full model and runs no
    /// select at all.
    pub fn full_broadcast(model_len: usize, cohort: usize) -> Self {
        DeliveryStats {
            scalars_down: vec![model_len; cohort],
            keys_visible_to_server: false,
            max_client_params: model_len,
            model_len,
            ..Default::default()
        }
    }
}

/// One select plan and the keys every cohort member requested from it.
#[derive(Debug, Clone, Copy)]
pub struct SelectRequest<'a> {
    pub plan: &'a SelectPlan,
    pub keys: &'a AtClients<KeySeq>,
}

/// Per client, the slices of every request in request order.
pub type DeliveredSlices = Vec<AtClients<Vec<Vec<f64>>>>;

/// Serves a single plan. See [`deliver_many`].
pub fn deliver(
    mode: DeliveryMode,
    x: &[f64],
    keys: &AtClients<KeySeq>,
    plan: &SelectPlan,
) -> Result<(AtClients<Vec<Vec<f64>>>, DeliveryStats)> {
    let (mut slices, stats) = deliver_many(mode, x, &[SelectRequest { plan, keys }], 0)?;
    Ok((slices.remove(0), stats))
}

/// Serves several select requests over the same cohort plus `broadcast_len`
/// scalars of always-broadcast blocks to every client.
pub fn deliver_many(
    mode: DeliveryMode,
    x: &[f64],
    requests: &[SelectRequest<'_>],
    broadcast_len: usize,
) -> Result<(DeliveredSlices, DeliveryStats)> {
    let model_len = x.len();
    let cohort_size = requests.first().map_or(0, |r| r.keys.len());
    let mut stats = DeliveryStats {
        scalars_down: vec![broadcast_len; cohort_size],
        keys_visible_to_server: mode.keys_visible_to_server(),
        model_len,
        ..Default::default()
    };
    let mut local_sizes = vec![broadcast_len; cohort_size];
    let mut out = Vec::with_capacity(requests.len());

    for req in requests {
        let plan = req.plan;
        crate::fedcore::validate_keys(req.keys, plan.keyspace())?;
        let requested: usize = req.keys.values().iter().map(|k| k.len()).sum();
        let unique: BTreeSet<SelectKey> = req.keys.values().iter().flat_map(|k| k.iter().copied()).collect();

        let slices = match mode {
            DeliveryMode::BroadcastCompute => {
                stats.client_psi_evals += requested;
                req.keys
                    .try_map(|_, seq| seq.iter().map(|&k| plan.psi_flat(x, k)).collect())?
            }
            DeliveryMode::OnDemand {
                cache: CacheScope::None,
            } => {
                stats.psi_evals += requested;
                req.keys
                    .try_map(|_, seq| seq.iter().map(|&k| plan.psi_flat(x, k)).collect())?
            }
            DeliveryMode::OnDemand {
                cache: CacheScope::PerRound,
            } => {
                let mut cache: HashMap<SelectKey, Vec<f64>> = HashMap::new();
                for &k in &unique {
                    cache.insert(k, plan.psi_flat(x, k)?);
                }
                stats.psi_evals += unique.len();
                stats.cache_hits += requested - unique.len();
                req.keys.map(|seq| seq.iter().map(|k| cache[k].clone()).collect())
            }
            DeliveryMode::Pregenerated => {
                let table = (0..plan.keyspace())
                    .map(|k| plan.psi_flat(x, k))
                    .collect::<Result<Vec<_>>>()?;
                stats.psi_evals += plan.keyspace();
                stats.wasted_slices += plan.keyspace() - unique.len();
                req.keys.map(|seq| seq.iter().map(|&k| table[k].clone()).collect())
            }
        };

        let shared = fused_broadcast_len(plan);
        for (i, seq) in req.keys.values().iter().enumerate() {
            let mut held = 0;
            for &k in seq.iter() {
                held += plan.slice_len(k)? - shared;
            }
            if !seq.is_empty() {
                held += shared;
            }
            local_sizes[i] += held;
            stats.scalars_down[i] += held;
        }
        out.push(slices);
    }

    if mode == DeliveryMode::BroadcastCompute {
        stats.scalars_down = vec![model_len; cohort_size];
    }
    stats.max_client_params = local_sizes.into_iter().max().unwrap_or(0);
    Ok((out, stats))
}

/// Scalars of a fused broadcast part, which travel once per client however
/// many keys it holds.
fn fused_broadcast_len(plan: &SelectPlan) -> usize {
    match plan.kind() {
        PlanKind::Fused { broadcast, .. } => broadcast.iter().map(|b| b.len).sum(),
        _ => 0,
    }
}

/// Totals over a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeliveryTotals {
    pub rounds: usize,
    pub psi_evals: usize,
    pub client_psi_evals: usize,
    pub scalars_down: usize,
    pub wasted_slices: usize,
    pub cache_hits: usize,
    pub max_client_params: usize,
    /// `max_client_params / s`; zero when there were no rounds.
    pub rel_model_size: f64,
}

pub fn account_summary(rounds: &[DeliveryStats]) -> DeliveryTotals {
    let mut t = DeliveryTotals {
        rounds: rounds.len(),
        ..Default::default()
    };
    let mut model_len = 0;
    for r in rounds {
        t.psi_evals += r.psi_evals;
        t.client_psi_evals += r.client_psi_evals;
        t.scalars_down += r.scalars_down_total();
        t.wasted_slices += r.wasted_slices;
        t.cache_hits += r.cache_hits;
        t.max_client_params = t.max_client_params.max(r.max_client_params);
        model_len = model_len.max(r.model_len);
    }
    if model_len > 0 {
        t.rel_model_size = t.max_client_params as f64 / model_len as f64;
    }
    t
}
