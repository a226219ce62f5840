//! Seed derivation shared by every stochastic component.
//!
//! A child seed is obtained by folding each component into a SplitMix64
//! state. The derivation is part of the reproducibility contract: given the
//! experiment seed, trial index and round index anyone can replay cohorts and
//! shared keys.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Concrete RNG used throughout the crate.
pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from an ordered list of components.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut state = 0x5EED_F00D_u64;
    for &p in parts {
        state = mix(state.wrapping_add(GOLDEN) ^ mix(p.wrapping_add(GOLDEN)));
    }
    state
}

/// Stream tags so that independent uses of one round seed never collide.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const COHORT: u64 = 2;
    pub const SHARED_KEYS: u64 = 3;
    pub const CLIENT_KEYS: u64 = 4;
    pub const CLIENT_TRAIN: u64 = 5;
    pub const TRIAL: u64 = 6;
    pub const ROUND: u64 = 7;
}

/// Seed for round `round` of trial `trial`.
pub fn round_seed(experiment_seed: u64, trial: u64, round: u64) -> u64 {
    derive_seed(&[experiment_seed, stream::TRIAL, trial, stream::ROUND, round])
}

pub fn rng_from(parts: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(parts))
}
