use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    /// A caller broke a documented precondition.
    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid value: {0}")]
    Validation(String),

    #[error("unsupported or malformed data: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("architecture mismatch in {what}: expected {expected}, found {found}")]
    Architecture {
        what: String,
        expected: String,
        found: String,
    },

    #[error("training diverged at epoch {epoch} (lr {lr:e}): {term} is not finite")]
    Diverged {
        epoch: usize,
        lr: f64,
        term: &'static str,
    },

    /// Input ended before the declared payload did.
    #[error("truncated {what}: need {needed} bytes, have {available}")]
    Truncated {
        what: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
