use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("short read: expected {expected} bytes, found {found}")]
    ShortRead { expected: usize, found: usize },

    #[error("non-finite value at element {0}")]
    NonFinite(usize),

    #[error("unsupported byte order")]
    UnsupportedByteOrder,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("no observations")]
    NoObservations,

    #[error("back-facing observation")]
    BackFacing,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
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
