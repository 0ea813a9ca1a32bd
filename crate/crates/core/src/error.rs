use thiserror::Error;

/// Errors produced by the solvers, models and file formats in this crate.
#[derive(Debug, Error)]
pub enum VgaError {
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("conjugate gradient breakdown at iteration {iteration}: curvature {curvature:e}")]
    PcgBreakdown { iteration: usize, curvature: f64 },

    #[error("requested rank {rank} exceeds the maximum {max}")]
    RankTooLarge { rank: usize, max: usize },

    #[error("the r x r inner system of the Woodbury update is numerically singular")]
    SingularInnerSystem,

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("rate exponent {value} at row {index} would overflow")]
    RateOverflow { index: usize, value: f64 },

    #[error("unknown test problem `{0}`")]
    UnknownProblem(String),

    #[error("invalid prior strength alpha = {0}")]
    InvalidAlpha(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid sparsity mask: {0}")]
    InvalidMask(String),

    #[error("dimension {dim} too large for this routine (max {max})")]
    DimensionTooLarge { dim: usize, max: usize },

    #[error("no convergence after {iterations} iterations")]
    MaxIterationsExceeded { iterations: usize },

    #[error("system is ill-conditioned (condition estimate {estimate:e})")]
    IllConditioned { estimate: f64 },

    #[error("alpha update denominator is not positive ({0:e})")]
    NonpositiveDenominator(f64),

    #[error("hyperparameter collapsed to {0:e}")]
    AlphaCollapse(f64),

    #[error("insufficient samples: have {have}, need at least {need}")]
    InsufficientSamples { have: usize, need: usize },

    #[error("covariance of dimension {dim} is too large to factor for sampling")]
    CovTooLargeForSampling { dim: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VgaError>;
