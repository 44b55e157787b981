use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report. CLI-only failures (files, parsing)
/// live in [`crate::cli::CliError`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("design matrix is rank deficient (condition number {condition:.3e})")]
    RankDeficientDesign { condition: f64 },

    #[error("insufficient sample size: n = {n}, need more than {required}")]
    InsufficientSampleSize { n: usize, required: usize },

    #[error("non-finite value in {what}")]
    NonFiniteInput { what: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("not identifiable at stage '{stage}': {matrix} is singular (condition number {condition:.3e})")]
    NonIdentifiable {
        stage: String,
        matrix: String,
        condition: f64,
    },

    #[error("L1·Γ1ᵀ + L2 is singular")]
    SingularOperatorSum,

    #[error("invalid scenario field `{field}`: {message}")]
    InvalidSpec { field: String, message: String },

    #[error("estimate carries no covariance matrix")]
    MissingVariance,

    #[error("confidence level must lie strictly between 0 and 1 (got {0})")]
    InvalidLevel(f64),

    #[error("{failed} of {total} replications failed for {method} (limit 1%)")]
    TooManyFailures {
        method: String,
        failed: usize,
        total: usize,
    },
}

impl Error {
    pub(crate) fn invalid_spec(field: &str, message: impl Into<String>) -> Self {
        Error::InvalidSpec {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn non_identifiable(stage: &str, matrix: &str, condition: f64) -> Self {
        Error::NonIdentifiable {
            stage: stage.to_string(),
            matrix: matrix.to_string(),
            condition,
        }
    }
}
