use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("malformed feature file {path}: {message}")]
    BadHeader { path: PathBuf, message: String },

    #[error("node id out of range: {id} (n = {n})")]
    NodeOutOfRange { id: usize, n: usize },

    #[error("row count mismatch: modality `{modality}` has {rows} rows, expected {expected}")]
    RowMismatch {
        modality: String,
        rows: usize,
        expected: usize,
    },

    #[error("label count {got} does not match node count {expected}")]
    LabelCount { got: usize, expected: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("problem too large for the dense path: n = {n} exceeds cap {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
