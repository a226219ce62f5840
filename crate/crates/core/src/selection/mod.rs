//! Blocked parameter layouts, select plans and key-selection strategies.

pub mod params;
pub mod plan;
pub mod strategy;

pub use params::{BlockRole, BlockSpec, BlockedParams};
pub use plan::{BlockRef, Coord, PlanKind, SelectPlan};
pub use strategy::{
    keys_mixed_alpha, keys_random_from_local, keys_random_top, keys_top_m, keys_uniform_random, mixed_key_counts,
    KeyCounts, KeyStrategy,
};
