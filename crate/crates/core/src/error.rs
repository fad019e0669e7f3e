use std::path::PathBuf;

use thiserror::Error;

use crate::io::FormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector with zero L2 norm reached a cosine kernel.
    #[error("zero-norm vector in {0}")]
    ZeroNorm(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint format version mismatch: file has {found:?}, expected {expected:?}")]
    CheckpointVersion { found: String, expected: String },

    #[error("checkpoint schema error: {0}")]
    CheckpointSchema(String),

    /// Forward cache missing or produced for a different batch.
    #[error("contract violation: {0}")]
    Contract(&'static str),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
