use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum SrbError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SrbError {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        SrbError::Argument(msg.into())
    }

    pub(crate) fn consistency(msg: impl Into<String>) -> Self {
        SrbError::Consistency(msg.into())
    }
}

pub type Result<T, E = SrbError> = std::result::Result<T, E>;
