use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate article key ({title}, {number}) for ids {first} and {second}")]
    DuplicateKey {
        title: String,
        number: u32,
        first: String,
        second: String,
    },

    #[error("duplicate article id {0}")]
    DuplicateId(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid pattern: {0}")]
    Pattern(String),

    #[error("unknown article id {0}")]
    UnknownArticle(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero embedding vector for {0}")]
    ZeroVector(String),

    #[error("embedding failed for article {id}: {cause}")]
    Embedding { id: String, cause: String },

    #[error("{kind} provider failure: {cause}")]
    Provider { kind: &'static str, cause: String },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("query {0} has an empty gold set")]
    EmptyGold(String),

    #[error("missing artifact {0}; run `lexpath index` first")]
    MissingArtifact(PathBuf),

    #[error("stale artifacts: {0}; rerun `lexpath index`")]
    StaleArtifact(String),

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

    pub(crate) fn provider(kind: &'static str, cause: impl ToString) -> Self {
        Error::Provider {
            kind,
            cause: cause.to_string(),
        }
    }
}
