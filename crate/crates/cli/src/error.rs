use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CliError {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("conflicting configuration: {0}")]
    ConfigConflict(String),

    #[error("malformed configuration: {0}")]
    Parse(String),

    #[error("{0}")]
    Usage(String),

    #[error("io error: {0}")]
    Io(String),

    #[error(transparent)]
    Runtime(#[from] fedselect::Error),
}

impl CliError {
    /// 1 for anything wrong with the invocation or config (including values
    /// the data generators reject), 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::UnknownKey(_) | CliError::ConfigConflict(_) | CliError::Parse(_) | CliError::Usage(_) => 1,
            CliError::Runtime(fedselect::Error::BadConfig(_)) => 1,
            CliError::Io(_) | CliError::Runtime(_) => 2,
        }
    }
}
