use thiserror::Error;

/// Errors raised by the sampler library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// An internal invariant of the chain state is broken.
    #[error("invariant violated: {0}")]
    Invariant(String),
    /// A quantity that must be finite is not.
    #[error("numerical failure in {factor}: {detail}")]
    Numerical { factor: String, detail: String },
    /// Cap growth kept failing within one iteration.
    #[error("iteration {iteration}: {restarts} cap restarts exceeded the limit")]
    RestartLimit { iteration: u64, restarts: usize },
    /// Malformed input (dataset, labels, checkpoint).
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
