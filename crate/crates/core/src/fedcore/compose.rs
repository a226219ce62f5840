//! Reductions between select plans: fusing a broadcast part into a select,
//! merging two selects over disjoint blocks, and flattening `m` keys into one.

use crate::error::{Error, Result};
use crate::fedcore::SelectKey;
use crate::selection::plan::{BlockRef, PlanKind};
use crate::selection::{BlockedParams, SelectPlan};

/// Plan whose every slice carries the broadcast blocks `y` after `psi(x, k)`.
pub fn fuse_broadcast_into_select(plan: &SelectPlan, params: &BlockedParams, y_blocks: &[&str]) -> Result<SelectPlan> {
    let used = plan.blocks();
    let mut broadcast = Vec::with_capacity(y_blocks.len());
    for name in y_blocks {
        if used.iter().any(|u| u == name) || broadcast.iter().any(|b: &BlockRef| b.name == *name) {
            return Err(Error::BlockCollision(name.to_string()));
        }
        broadcast.push(BlockRef::from(params.block(name)?));
    }
    if params.len() != plan.model_len() {
        return Err(Error::ShapeMismatch(format!(
            "plan built for {} scalars, layout has {}",
            plan.model_len(),
            params.len()
        )));
    }
    Ok(SelectPlan::from_parts(
        PlanKind::Fused {
            inner: Box::new(plan.clone()),
            broadcast,
        },
        plan.keyspace(),
        plan.model_len(),
    ))
}

/// Composite key of the pair `(k1, k2)`: `k1 * K2 + k2`.
pub fn merged_key(k1: SelectKey, k2: SelectKey, second_keyspace: usize) -> SelectKey {
    k1 * second_keyspace + k2
}

/// Plan over `K1 * K2` keys selecting `(psi1(x1, k1), psi2(x2, k2))`.
pub fn merge_select_plans(first: &SelectPlan, second: &SelectPlan) -> Result<SelectPlan> {
    if first.model_len() != second.model_len() {
        return Err(Error::ShapeMismatch(format!(
            "plans built for models of {} and {} scalars",
            first.model_len(),
            second.model_len()
        )));
    }
    let used = first.blocks();
    if let Some(clash) = second.blocks().into_iter().find(|b| used.contains(b)) {
        return Err(Error::BlockCollision(clash));
    }
    let keyspace = first
        .keyspace()
        .checked_mul(second.keyspace())
        .ok_or(Error::KeyspaceOverflow)?;
    Ok(SelectPlan::from_parts(
        PlanKind::Merged {
            first: Box::new(first.clone()),
            second: Box::new(second.clone()),
        },
        keyspace,
        first.model_len(),
    ))
}

/// Composite key of `[z_1, ..., z_m]`: `sum_i z_i K^(m-i)`.
pub fn flattened_key(keys: &[SelectKey], keyspace: usize) -> Result<SelectKey> {
    keys.iter().try_fold(0usize, |acc, &k| {
        acc.checked_mul(keyspace)
            .and_then(|v| v.checked_add(k))
            .ok_or(Error::KeyspaceOverflow)
    })
}

/// Plan over `K^m` single keys, each standing for an ordered sequence of `m`
/// keys of `plan`. The keyspace grows exponentially in `m`.
pub fn flatten_multikey_plan(plan: &SelectPlan, m: usize) -> Result<SelectPlan> {
    if m == 0 {
        return Err(Error::BadConfig("flattening needs at least one key".into()));
    }
    if m == 1 {
        return Ok(plan.clone());
    }
    let exp = u32::try_from(m).map_err(|_| Error::KeyspaceOverflow)?;
    let keyspace = plan.keyspace().checked_pow(exp).ok_or(Error::KeyspaceOverflow)?;
    Ok(SelectPlan::from_parts(
        PlanKind::Flattened {
            inner: Box::new(plan.clone()),
            count: m,
        },
        keyspace,
        plan.model_len(),
    ))
}
