use std::path::PathBuf;

use crate::synthgen::{LocalizationError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate document id {0:?}")]
    DuplicateId(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index format error: {0}")]
    Format(String),

    #[error("dimension mismatch for {id}: expected {expected}, got {actual}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        actual: usize,
    },

    #[error(
        "provider fingerprint mismatch: index built with {index:?}, query provider is {provider:?}"
    )]
    FingerprintMismatch { index: String, provider: String },

    #[error("sparse and dense indices do not share a passage id space: {0}")]
    IdSpaceMismatch(String),

    #[error("unknown passage id {0:?}")]
    UnknownPassage(String),

    #[error("provider error: {0}")]
    Provider(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Localization(#[from] LocalizationError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
