use thiserror::Error;

use crate::protocol::SourceError;

/// Errors produced by the evaluation engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A value violated a documented domain invariant.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A record file could not be parsed. `line` is 1-based.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("annotation source failed: {0}")]
    Source(#[from] SourceError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
