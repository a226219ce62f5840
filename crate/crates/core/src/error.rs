use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the federated primitives, plans, models and drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cohort is empty")]
    EmptyCohort,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("key {key} at position {position} of client {client} is outside keyspace [0, {keyspace})")]
    KeyOutOfRange {
        client: usize,
        position: usize,
        key: usize,
        keyspace: usize,
    },

    #[error("block `{0}` is used by both sides of a plan composition")]
    BlockCollision(String),

    #[error("keyspace size overflows the key integer range")]
    KeyspaceOverflow,

    #[error("requested {requested} distinct keys from a keyspace of {keyspace}")]
    TooManyKeys { requested: usize, keyspace: usize },

    #[error("alpha must lie in (0, 1], got {0}")]
    BadAlpha(f64),

    #[error("feature {0} is not part of the selected slice")]
    FeatureNotInSlice(usize),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("cohort of {requested} requested from a pool of {pool} clients")]
    CohortTooLarge { requested: usize, pool: usize },

    #[error("unknown block `{0}`")]
    UnknownBlock(String),

    #[error("duplicate block `{0}`")]
    DuplicateBlock(String),

    #[error("bad configuration: {0}")]
    BadConfig(String),

    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
