//! Placed values and the federated communication primitives.

mod compose;
mod primitives;
mod values;

pub use compose::{flatten_multikey_plan, flattened_key, fuse_broadcast_into_select, merge_select_plans, merged_key};
pub use primitives::{
    aggregate_mean, aggregate_mean_deselect, aggregate_mean_deselect_with, broadcast, fed_select, Deselect,
    DeselectNormalization, FnSelect, SelectFn, TouchedSet,
};
pub use values::{
    AtClients, AtServer, ClientId, CommLedger, FederatedValue, KeySeq, Placement, ScalarCount, SelectKey,
};

pub(crate) use primitives::validate_keys;
