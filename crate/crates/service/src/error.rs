use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("{0}")]
    Input(String),
    #[error("{path}:{line}: corrupt log entry: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] altereval_core::Error),
}

pub type ServiceResult<T> = Result<T, ServiceError>;
