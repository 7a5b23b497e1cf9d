//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChitaError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("sparsity budget k = {k} is outside [1, {p}]")]
    KOutOfRange { k: usize, p: usize },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("coordinate {0} is not in the current support")]
    NotInSupport(usize),

    #[error("index {index} out of bounds for length {len}")]
    IndexOutOfBounds { index: usize, len: usize },

    #[error("insufficient data: need {needed} samples, dataset holds {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("curvature trace estimate is not positive; cannot form the scale ratio")]
    IndeterminateCurvature,

    #[error("stage {stage}: target sparsity {sparsity} leaves a zero coordinate budget")]
    InfeasibleStage { stage: usize, sparsity: f64 },

    #[error("linear system solve failed: {0}")]
    SingularSystem(String),
}

pub type Result<T> = std::result::Result<T, ChitaError>;
