//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A file could not be parsed into the expected schema.
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    /// An input violated a structural or numeric precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Two objects that must live on the same mesh do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A factorization or solve failed, or produced non-finite output.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A Monte Carlo estimator degenerated (e.g. all importance weights
    /// vanished) and its output is meaningless.
    #[error("ill-conditioned estimate: {0}")]
    IllConditioned(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
