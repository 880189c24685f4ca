//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A mathematical precondition was violated (rate out of range, distance
    /// out of [0, n], ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally mismatched inputs (policies from different builds, wrong
    /// distribution kind, grid too short, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Invalid run configuration (controller incompatible with lambda, ...).
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A simulated run exceeded the iteration cap (pathological controller).
    #[error("iteration cap of {0} iterations exceeded")]
    IterationCap(u64),

    #[error("parse error in {what}: {detail}")]
    Parse { what: String, detail: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
