use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition (shape, Hermitian-ness, semi-unitarity).
    #[error("validation error: {0}")]
    Validation(String),

    /// A numerical routine could not produce a trustworthy result.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("ill-conditioned matrix (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("rank-deficient input: column {column} has residual norm {norm:.3e}")]
    RankDeficient { column: usize, norm: f64 },

    /// Scalar argument outside the domain of a closed-form expression.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Short machine-readable category used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Numerical(_) | Error::IllConditioned { .. } | Error::RankDeficient { .. } => {
                "numerical"
            }
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }
}
