use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid domain: {0}")]
    Domain(String),
    #[error("invalid coefficients: {0}")]
    Coefficients(String),
    #[error("assembly failed: {0}")]
    Assembly(String),
    #[error("invalid right-hand side: {0}")]
    Rhs(String),
    #[error("solver failure: {message}")]
    Solver {
        message: String,
        iterations: usize,
        relative_residual: f64,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("config error: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn solver(message: impl Into<String>, iterations: usize, relative_residual: f64) -> Self {
        Error::Solver {
            message: message.into(),
            iterations,
            relative_residual,
        }
    }
}
