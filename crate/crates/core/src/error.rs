use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    /// Malformed input record. `line` is one-based.
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("inconsistent sampler state: {0}")]
    StateInconsistent(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("triplet ({subject}, {verb}, {object}) is not invertible: {reason}")]
    NotInvertible {
        subject: String,
        verb: String,
        object: String,
        reason: &'static str,
    },

    #[error("seed phrase(s) not present in the triplet graph: {}", .0.join(", "))]
    MissingSeeds(Vec<String>),

    #[error("unknown document id {0:?}")]
    UnknownDocument(String),

    #[error("key mismatch between assignment and truth: {0}")]
    KeyMismatch(String),

    #[error("token {index} has zero probability under the model")]
    ZeroProbability { index: usize },

    #[error("{0}")]
    InvalidArgument(String),

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
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
