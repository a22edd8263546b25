use std::io;

use thiserror::Error;

use crate::metrics::MetricsRecord;

pub type Result<T> = std::result::Result<T, LdganError>;

#[derive(Debug, Error)]
pub enum LdganError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Cholesky hit a non-positive pivot; the caller should raise the regularization.
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("need at least 2 populated classes, found {populated}")]
    InsufficientClasses { populated: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    /// Training produced a non-finite objective. `record` is the metrics row at the
    /// point of failure, kept for diagnosis.
    #[error("non-finite value in {stage} at iteration {iteration}")]
    NonFinite {
        stage: &'static str,
        iteration: usize,
        record: Box<MetricsRecord>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl LdganError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        LdganError::InvalidInput(msg.into())
    }

    /// Short stable tag used in the CLI's diagnostic line.
    pub fn kind(&self) -> &'static str {
        match self {
            LdganError::InvalidInput(_) => "invalid_input",
            LdganError::NotPositiveDefinite { .. } => "not_positive_definite",
            LdganError::InsufficientClasses { .. } => "insufficient_classes",
            LdganError::Format(_) => "format",
            LdganError::Config(_) => "config",
            LdganError::NonFinite { .. } => "non_finite",
            LdganError::Io(_) => "io",
        }
    }
}
