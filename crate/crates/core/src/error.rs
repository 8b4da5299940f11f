use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    /// A precondition on an argument failed.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Mismatched lengths or grids.
    #[error("structural error: {0}")]
    Structural(String),
    /// Non-finite intermediate, failed solve, or time-step collapse.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// The input leaves the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

impl LabError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidArgument(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Self::Numerical(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
