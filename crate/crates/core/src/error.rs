use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the inference toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A function argument is outside its accepted range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Inconsistent or incomplete run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A variational state left its valid domain.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Non-finite value where a finite one was required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Monte Carlo estimation produced no usable value.
    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    /// Held-out evaluation could not be carried out.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// Malformed input file.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// Well-formed input that violates a data invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// True for errors caused by how the run was configured rather than by
    /// what happened while it ran.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidArgument(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
