use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Variants are grouped by the process exit code the CLI maps them to:
/// validation (2), numerical failure (3) and I/O or format (4).
#[derive(Debug, Error)]
pub enum MnoError {
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("blow-up at step {step}: {detail}")]
    BlowUp { step: usize, detail: String },

    #[error("trajectory {trajectory} blew up: {source}")]
    TrajectoryBlowUp {
        trajectory: usize,
        #[source]
        source: Box<MnoError>,
    },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("degenerate reference norm: {0}")]
    DegenerateNorm(String),

    #[error("requested rank {requested} exceeds data rank {achieved}")]
    RankDeficient { requested: usize, achieved: usize },

    #[error("missing saved state: {0}")]
    MissingState(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file: {0}")]
    Format(String),
}

pub type Result<T, E = MnoError> = std::result::Result<T, E>;

impl MnoError {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        MnoError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MnoError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 validation, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            MnoError::Validation { .. } | MnoError::Shape(_) => 2,
            MnoError::BlowUp { .. }
            | MnoError::TrajectoryBlowUp { .. }
            | MnoError::NonFiniteLoss { .. }
            | MnoError::NonFinite(_)
            | MnoError::DegenerateNorm(_)
            | MnoError::RankDeficient { .. }
            | MnoError::MissingState(_) => 3,
            MnoError::Io { .. } | MnoError::Format(_) => 4,
        }
    }
}
