use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid run configuration, dictionary, key spec or framework spec.
    #[error("configuration error: {0}")]
    Config(String),

    /// A value outside an operation's domain (empty population, birth year
    /// after census year, mismatched categories, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("ingest error for register {register_id}: {message}")]
    Ingest { register_id: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 2,
            Error::Domain(_) | Error::Ingest { .. } => 3,
            Error::Io { .. } => 4,
            Error::Csv(e) if e.is_io_error() => 4,
            Error::Csv(_) | Error::Json(_) => 3,
        }
    }
}
