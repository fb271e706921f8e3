//! Crate-wide error type.

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A file could not be parsed; carries the 1-based line number.
    #[error("{path}:{line}: {msg}")]
    Format {
        path: String,
        line: usize,
        msg: String,
    },

    /// An I/O operation failed; carries the offending path.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A numerical routine failed to produce a finite / converged result.
    #[error("numeric failure: {msg} (residual {residual:.3e})")]
    Numeric { msg: String, residual: f64 },

    /// A training run produced no usable cells.
    #[error("training failed: {0}")]
    Training(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
