//! Simulation toolkit for federated training with keyed model selection.
//!
//! Clients request slices of a large server model by integer key
//! ([`fedcore::fed_select`]), train them locally, and the server folds the
//! keyed updates back with a deselection scatter before applying a
//! first-order server optimizer. Slice delivery can be simulated under three
//! strategies with exact communication and compute accounting
//! ([`delivery`]).
//!
//! Module map:
//!
//! * [`fedcore`]: placed values, broadcast / mean / select / deselect
//!   primitives and plan composition.
//! * [`selection`]: blocked parameter vectors, select plans and client key
//!   strategies.
//! * [`models`]: sparse one-vs-rest logistic regression and a one hidden
//!   layer MLP with hand-written gradients, client updates and metrics.
//! * [`training`]: server optimizers, cohort sampling, rounds and trials.
//! * [`delivery`]: slice delivery strategies and cost accounting.
//! * [`data`]: synthetic federated datasets and the shard file loader.

pub mod data;
pub mod delivery;
pub mod error;
pub mod fedcore;
pub mod models;
pub mod seeds;
pub mod selection;
pub mod training;

pub use error::{Error, Result};
pub use fedcore::{AtClients, AtServer, ClientId, CommLedger, FederatedValue, KeySeq, SelectKey};
pub use selection::{BlockRole, BlockedParams, KeyStrategy, SelectPlan};
