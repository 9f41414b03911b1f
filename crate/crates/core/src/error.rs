use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SorrError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SorrError {
    /// An argument violated an operation's precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The optimizer produced a non-finite or exploding iterate.
    #[error("optimization diverged at outer iteration {outer}, inner step {inner}: {reason}")]
    Divergence {
        outer: usize,
        inner: usize,
        reason: String,
    },

    /// A cell of a tabular input could not be interpreted.
    #[error("{path}: row {row}, column {column:?}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("malformed data: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SorrError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        SorrError::Parameter(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SorrError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self, SorrError::Divergence { .. })
    }
}
