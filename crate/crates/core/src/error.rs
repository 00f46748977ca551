use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("i/o error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: `{field}` {message}")]
    Config { field: String, message: String },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("vocabulary conflict: {0}")]
    VocabularyConflict(String),

    #[error("numerical divergence")]
    NumericalDivergence,

    #[error("insufficient co-occurrence data")]
    InsufficientCooccurrence,

    #[error("no scorable sessions")]
    NoScorableSessions,

    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),

    #[error("unsupported snapshot version {0}")]
    UnsupportedSnapshotVersion(u32),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
