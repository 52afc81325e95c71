//! Crate-wide error type.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("design data has no rows")]
    EmptyDesign,

    #[error("weight at row {index} must be strictly positive, got {value}")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("linear system is singular; use a positive ridge parameter")]
    SingularSystem,

    #[error("covariance factorization failed after jitter escalation")]
    FactorizationFailed,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no posterior snapshots recorded yet")]
    NoSnapshots,

    #[error("arm {arm} has no observations")]
    EmptyArmHistory { arm: usize },

    #[error("arm {arm} out of range for {n_arms} arms")]
    UnknownArm { arm: usize, n_arms: usize },

    #[error("dataset row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("label column `{name}` not found in header")]
    MissingLabelColumn { name: String },

    #[error("dataset contains no data rows")]
    EmptyDataset,

    #[error("no results to aggregate")]
    EmptyResults,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
