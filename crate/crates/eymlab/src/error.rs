//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures reported by field constructors and operators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EymError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("axis {axis} out of range for a {n}-dimensional grid")]
    AxisOutOfRange { axis: usize, n: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("metric is not positive definite at site {site}")]
    NonSpd { site: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("Lie algebra mismatch: {0}")]
    AlgebraMismatch(String),
    #[error("invalid Lie algebra data: {0}")]
    InvalidAlgebra(String),
    #[error("background curvature is not central in the Lie algebra")]
    NonCentralBackground,
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, EymError>;
