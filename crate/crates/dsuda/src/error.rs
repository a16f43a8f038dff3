use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Vector/matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A value violated a numeric precondition (non-finite, out of range).
    #[error("invalid value: {0}")]
    Value(String),

    /// Configuration failed validation.
    #[error("invalid config: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("bad data: {0}")]
    Data(String),

    /// Checkpoint could not be read or written.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Training aborted.
    #[error("training error: {0}")]
    Train(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
