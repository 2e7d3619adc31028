use thiserror::Error;

/// Errors raised by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data is malformed, empty, or violates an operation's preconditions.
    #[error("{0}")]
    Data(String),
    /// A numerical routine produced an unusable result.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Malformed CSV input, with the file and 1-based line of the problem.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
