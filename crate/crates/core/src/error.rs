use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::ContextId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("unresolved reference: {0}")]
    Reference(String),

    #[error("no responses for context {0}")]
    MissingContext(ContextId),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("cannot tokenize {0:?} under the vocabulary")]
    Tokenization(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("no distribution stored for prefix {0:?}")]
    Coverage(Vec<u32>),

    #[error("design matrix error: {0}")]
    Design(String),

    #[error("no convergence after {iterations} iterations (lambda bracket [{low:.3e}, {high:.3e}])")]
    Convergence {
        iterations: usize,
        low: f64,
        high: f64,
    },

    #[error("fold plan error: {0}")]
    Plan(String),

    #[error("frequency threshold {0} leaves no frequent tokens")]
    DegenerateThreshold(f64),

    #[error("{path}: {source}")]
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
