use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by ingestion, model fitting and estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unit {unit_id}, wave {wave}: {message}")]
    Invariant {
        unit_id: String,
        wave: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate outcome: {0}")]
    DegenerateOutcome(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("rank-deficient design; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("estimation failed at wave {wave}: {message}")]
    Estimation { wave: usize, message: String },

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
