use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Scenario or experiment parameters violate a model invariant.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric argument lies outside the domain of the formula.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension {dim} exceeds the exhaustive-enumeration limit of {limit}")]
    DimensionGuard { dim: usize, limit: usize },

    /// Stacked channel matrix is too close to singular for zero-forcing.
    #[error("channel matrix ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by user-supplied configuration (CLI exit code 2).
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Domain(_) | Error::DimensionGuard { .. } | Error::Json { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
