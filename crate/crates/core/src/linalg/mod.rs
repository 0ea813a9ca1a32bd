//! Dense symmetric positive definite linear algebra and low-rank primitives.
//!
//! Everything here is a pure function of its inputs. Randomized routines take
//! an explicit seed.

mod mask;
mod operator;
mod pcg;
mod rsvd;
mod spd;
pub mod vgam;
mod woodbury;

pub use mask::SparsityMask;
pub use operator::LinearOperator;
pub use pcg::{pcg_solve, PcgOptions, PcgOutcome};
pub use rsvd::{rsvd, suggest_rank, LowRankFactor, RsvdOptions, DEFAULT_RANK_THRESHOLD};
pub use spd::{cholesky, logdet, symmetrize, CholeskyFactor, SpdMatrix};
pub use woodbury::{woodbury_cov, woodbury_cov_logdet, CovarianceServices};

use nalgebra::DMatrix;

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn symmetric_spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    eig.eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    eig.eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// True when `lower ⪯ upper` in the Loewner order, up to `slack` on the
/// smallest eigenvalue of `upper - lower`.
pub fn loewner_le(lower: &DMatrix<f64>, upper: &DMatrix<f64>, slack: f64) -> bool {
    min_eigenvalue(&(upper - lower)) >= -slack
}
