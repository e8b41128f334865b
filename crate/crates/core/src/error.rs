use std::path::PathBuf;

/// Errors raised by the simulator, estimator and planners.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A numeric argument outside the domain of a model function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Precondition violated by the caller (e.g. robot placed inside an obstacle).
    #[error("invalid call: {0}")]
    Caller(String),

    /// The planner produced no usable candidate.
    #[error("planner failure: {0}")]
    Planner(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
