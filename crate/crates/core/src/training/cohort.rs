use rand::seq::index;

use crate::error::{Error, Result};
use crate::fedcore::ClientId;
use crate::seeds::{rng_from, stream};

/// Uniform sample of `size` distinct clients, a pure function of
/// `round_seed`, so that variants sharing a seed see the same cohorts.
pub fn sample_cohort(pool: &[ClientId], size: usize, round_seed: u64) -> Result<Vec<ClientId>> {
    if size > pool.len() {
        return Err(Error::CohortTooLarge {
            requested: size,
            pool: pool.len(),
        });
    }
    if size == 0 {
        return Err(Error::EmptyCohort);
    }
    let mut rng = rng_from(&[round_seed, stream::COHORT]);
    Ok(index::sample(&mut rng, pool.len(), size)
        .iter()
        .map(|i| pool[i])
        .collect())
}
