use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("missing categories: {}", .0.join(", "))]
    MissingCategories(Vec<String>),
    #[error("category {category} has {available} responses, need {required}")]
    NotEnoughResponses {
        category: String,
        available: usize,
        required: usize,
    },
    #[error("model is untrained")]
    Untrained,
    #[error("scheme mismatch: expected {expected}, found {found}")]
    SchemeMismatch { expected: String, found: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("sequence of length {len} exceeds maximum {max}")]
    TooLong { len: usize, max: usize },
    #[error("unknown category {0}")]
    UnknownCategory(String),
    #[error("pivot set for {0} is empty")]
    EmptyPivotSet(String),
    #[error("invalid model file: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
