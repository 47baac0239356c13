use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Model or training configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A scalar argument is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Input data is malformed or unusable.
    #[error("data error: {0}")]
    Data(String),

    /// A computation produced or met a non-finite / ill-conditioned value.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An API was called in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class: 2 usage, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Parameter(_) | Error::Config(_) => 2,
            Error::Data(_) | Error::Io { .. } | Error::Dimension(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}
