use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the workbench.
#[derive(Debug, Error)]
pub enum AmbcError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing side information: {0}")]
    MissingSideInfo(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = AmbcError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> AmbcError {
    AmbcError::InvalidParameter(msg.into())
}
