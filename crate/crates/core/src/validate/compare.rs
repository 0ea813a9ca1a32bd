use serde::{Deserialize, Serialize};

use crate::elbo::{gaussian_kl, GaussianState};
use crate::error::{Result, VgaError};
use crate::linalg::symmetric_spectral_norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComparison {
    /// `‖x̄1 - x̄2‖₂`.
    pub mean_l2: f64,
    /// `‖C1 - C2‖₂`.
    pub cov_spectral: f64,
    /// `KL(g1 ‖ g2)`.
    pub kl_12: f64,
    /// `KL(g2 ‖ g1)`.
    pub kl_21: f64,
}

pub fn compare_gaussians(g1: &GaussianState, g2: &GaussianState) -> Result<GaussianComparison> {
    if g1.dim() != g2.dim() {
        return Err(VgaError::DimensionMismatch {
            context: "compare_gaussians",
            expected: g1.dim(),
            found: g2.dim(),
        });
    }
    Ok(GaussianComparison {
        mean_l2: (&g1.mean - &g2.mean).norm(),
        cov_spectral: symmetric_spectral_norm(&(g1.cov.as_matrix() - g2.cov.as_matrix())),
        kl_12: gaussian_kl(g1, g2)?,
        kl_21: gaussian_kl(g2, g1)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SpdMatrix;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    #[test]
    fn examples() {
        let a = GaussianState::new(DVector::zeros(3), SpdMatrix::identity(3)).unwrap();
        let same = compare_gaussians(&a, &a).unwrap();
        assert_eq!(
            (same.mean_l2, same.cov_spectral, same.kl_12, same.kl_21),
            (0.0, 0.0, 0.0, 0.0)
        );

        let b = GaussianState::new(
            DVector::from_vec(vec![0.0, 1.0, 0.0]),
            SpdMatrix::identity(3),
        )
        .unwrap();
        let c = compare_gaussians(&a, &b).unwrap();
        assert_eq!(c.mean_l2, 1.0);
        assert_relative_eq!(c.kl_12, 0.5, epsilon = 1e-15);
        assert_relative_eq!(c.kl_21, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn swapping_swaps_kl() {
        let a = GaussianState::new(
            DVector::from_vec(vec![1.0, 2.0]),
            SpdMatrix::identity(2).scaled(2.0),
        )
        .unwrap();
        let b = GaussianState::new(DVector::zeros(2), SpdMatrix::identity(2)).unwrap();
        let ab = compare_gaussians(&a, &b).unwrap();
        let ba = compare_gaussians(&b, &a).unwrap();
        assert_eq!(ab.kl_12, ba.kl_21);
        assert_eq!(ab.kl_21, ba.kl_12);
        assert_eq!(ab.mean_l2, ba.mean_l2);
        assert_relative_eq!(ab.cov_spectral, ba.cov_spectral);
    }
}
