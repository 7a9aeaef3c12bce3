use thiserror::Error;

use crate::distributions::Projection;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite after jitter up to {max_jitter:e}")]
    NotPositiveDefinite { max_jitter: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error(
        "goal cost undefined for {goal} goal with {projection}-projection: \
         the goal density is zero outside its support, so the I-projection \
         divides by zero at every state outside it"
    )]
    UnsupportedProjection {
        goal: &'static str,
        projection: Projection,
    },

    #[error("dynamics produced a non-finite state at sigma point {index}")]
    NonFiniteSigmaPoint { index: usize },

    #[error("cost of sample {sample} is NaN")]
    NanCost { sample: usize },

    #[error("planning infeasible: fewer than {needed} finite-cost samples for {iterations} consecutive iterations")]
    Infeasible { needed: usize, iterations: usize },

    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("distribution family mismatch: {0}")]
    FamilyMismatch(String),

    #[error("quadrature grid misses probability mass {missing:e} (limit 1e-8)")]
    InsufficientCoverage { missing: f64 },

    #[error("scenario validation failed at `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. } | Error::Parse { .. } | Error::UnsupportedProjection { .. } => 2,
            Error::Infeasible { .. } => 3,
            _ => 4,
        }
    }
}
