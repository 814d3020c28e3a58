use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by library operations.
///
/// Model misbehavior inside an episode is never an `Error`; it is recorded
/// on the trajectory instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown dataset format '{0}' (expected 'movielens' or 'amazon')")]
    UnknownFormat(String),

    #[error("zero valid records in {0}")]
    NoRecords(PathBuf),

    #[error("not enough negatives for {user}: need {needed}, only {available} available")]
    InsufficientNegatives {
        user: String,
        needed: usize,
        available: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown user {0}")]
    UnknownUser(String),

    #[error("unknown item {0}")]
    UnknownItem(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("snapshot {path}: {reason}")]
    Snapshot { path: PathBuf, reason: String },

    #[error("transport: {0}")]
    Transport(String),

    #[error("malformed record at {path}:{line}: {reason}")]
    Record {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("missing artifact {path}: run {producer} first")]
    MissingArtifact { path: PathBuf, producer: &'static str },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
