use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VgaError};
use crate::linalg::{CovarianceServices, SpdMatrix};

/// Which precision structure `C̄0⁻¹ = LᵗL` the prior uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    /// `L = I`.
    L2,
    /// `L = L₁`, the anchored first-order forward difference.
    H1,
    /// `L = I ⊗ L₁ + L₁ ⊗ I` on a square grid.
    #[serde(rename = "h1_2d")]
    H1_2D,
}

impl std::str::FromStr for PriorKind {
    type Err = VgaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Self::L2),
            "h1" => Ok(Self::H1),
            "h1_2d" | "h1-2d" => Ok(Self::H1_2D),
            other => Err(VgaError::InvalidConfig(format!(
                "unknown prior kind `{other}`"
            ))),
        }
    }
}

/// The α-independent part of a Gaussian prior: mean, factor `L`, and the
/// derived base precision `C̄0⁻¹ = LᵗL` and base covariance `C̄0`.
#[derive(Debug, Clone)]
pub struct PriorStructure {
    kind: PriorKind,
    mu0: DVector<f64>,
    factor: DMatrix<f64>,
    /// Nonzeros of `L` per row, for cheap quadratic forms.
    factor_rows: Vec<Vec<(usize, f64)>>,
    precision: DMatrix<f64>,
    covariance: DMatrix<f64>,
    logdet_covariance: f64,
}

impl PriorStructure {
    pub fn new(kind: PriorKind, mu0: DVector<f64>, factor: DMatrix<f64>) -> Result<Self> {
        let m = mu0.len();
        if factor.nrows() != m || factor.ncols() != m {
            return Err(VgaError::DimensionMismatch {
                context: "prior factor",
                expected: m,
                found: factor.nrows(),
            });
        }
        let factor_rows = factor
            .row_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        let precision = SpdMatrix::from_symmetrized(&factor.tr_mul(&factor));
        let chol = precision.cholesky()?;
        let logdet_covariance = -chol.logdet();
        let covariance = crate::linalg::symmetrize(&chol.inverse());
        Ok(Self {
            kind,
            mu0,
            factor,
            factor_rows,
            precision: precision.into_inner(),
            covariance,
            logdet_covariance,
        })
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn mu0(&self) -> &DVector<f64> {
        &self.mu0
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// `C̄0⁻¹`.
    pub fn base_precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// `C̄0`.
    pub fn base_covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn logdet_base_covariance(&self) -> f64 {
        self.logdet_covariance
    }

    /// `(x - μ0)ᵗ C̄0⁻¹ (x - μ0) = ‖L (x - μ0)‖²`.
    pub fn base_quad(&self, x: &DVector<f64>) -> f64 {
        let r = x - &self.mu0;
        self.factor_rows
            .iter()
            .map(|row| {
                let v: f64 = row.iter().map(|&(j, l)| l * r[j]).sum();
                v * v
            })
            .sum()
    }

    /// `tr(C̄0⁻¹ C)`, an entrywise inner product of two symmetric matrices.
    pub fn base_trace(&self, c: &DMatrix<f64>) -> f64 {
        self.precision.dot(c)
    }
}

/// A prior `N(μ0, α⁻¹ C̄0)`.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    structure: Arc<PriorStructure>,
    alpha: f64,
}

impl PriorSpec {
    pub fn new(structure: Arc<PriorStructure>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(VgaError::InvalidAlpha(alpha));
        }
        Ok(Self { structure, alpha })
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(Arc::clone(&self.structure), alpha)
    }

    pub fn structure(&self) -> &Arc<PriorStructure> {
        &self.structure
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.structure.dim()
    }

    pub fn mu0(&self) -> &DVector<f64> {
        self.structure.mu0()
    }

    /// `C0⁻¹ v`.
    pub fn apply_precision(&self, v: &DVector<f64>) -> DVector<f64> {
        (&self.structure.precision * v) * self.alpha
    }

    /// `C0 v`.
    pub fn apply_covariance(&self, v: &DVector<f64>) -> DVector<f64> {
        (&self.structure.covariance * v) / self.alpha
    }

    /// `(x - μ0)ᵗ C0⁻¹ (x - μ0)`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        self.alpha * self.structure.base_quad(x)
    }

    /// `tr(C0⁻¹ C)`.
    pub fn trace_precision(&self, c: &DMatrix<f64>) -> f64 {
        self.alpha * self.structure.base_trace(c)
    }

    /// `ln|C0| = ln|C̄0| - m ln α`.
    pub fn logdet_covariance(&self) -> f64 {
        self.structure.logdet_covariance - self.dim() as f64 * self.alpha.ln()
    }

    /// Dense `C0⁻¹`.
    pub fn precision_matrix(&self) -> DMatrix<f64> {
        &self.structure.precision * self.alpha
    }

    /// Dense `C0`.
    pub fn covariance_matrix(&self) -> SpdMatrix {
        SpdMatrix::from_symmetrized(&(&self.structure.covariance / self.alpha))
    }
}

impl CovarianceServices for PriorSpec {
    fn dim(&self) -> usize {
        PriorSpec::dim(self)
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        (&self.structure.covariance * x) / self.alpha
    }
    fn entry(&self, i: usize, j: usize) -> f64 {
        self.structure.covariance[(i, j)] / self.alpha
    }
    fn logdet(&self) -> Result<f64> {
        Ok(self.logdet_covariance())
    }
}

/// Anchored forward difference: row 0 is `e₀`, row `i` is `eᵢ - eᵢ₋₁`.
pub fn difference_matrix(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            1.0
        } else if i == j + 1 {
            -1.0
        } else {
            0.0
        }
    })
}

/// Builds the prior of the given kind on `R^m`. A missing `mu0` means zero.
pub fn make_prior(
    kind: PriorKind,
    alpha: f64,
    m: usize,
    mu0: Option<DVector<f64>>,
) -> Result<PriorSpec> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(VgaError::InvalidAlpha(alpha));
    }
    let structure = make_structure(kind, m, mu0)?;
    PriorSpec::new(Arc::new(structure), alpha)
}

/// The α-free structure of [`make_prior`], for sharing across α values.
pub fn make_structure(
    kind: PriorKind,
    m: usize,
    mu0: Option<DVector<f64>>,
) -> Result<PriorStructure> {
    if m == 0 {
        return Err(VgaError::InvalidConfig(
            "prior dimension must be positive".into(),
        ));
    }
    let mu0 = mu0.unwrap_or_else(|| DVector::zeros(m));
    if mu0.len() != m {
        return Err(VgaError::DimensionMismatch {
            context: "make_prior mu0",
            expected: m,
            found: mu0.len(),
        });
    }
    let factor = match kind {
        PriorKind::L2 => DMatrix::identity(m, m),
        PriorKind::H1 => difference_matrix(m),
        PriorKind::H1_2D => {
            let side = (m as f64).sqrt().round() as usize;
            if side * side != m {
                return Err(VgaError::InvalidConfig(format!(
                    "h1_2d prior needs a square number of unknowns, got {m}"
                )));
            }
            let l1 = difference_matrix(side);
            let eye = DMatrix::identity(side, side);
            eye.kronecker(&l1) + l1.kronecker(&eye)
        }
    };
    PriorStructure::new(kind, mu0, factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn l2_prior_is_identity() {
        let p = make_prior(PriorKind::L2, 1.0, 4, None).unwrap();
        assert_eq!(p.precision_matrix(), DMatrix::identity(4, 4));
        assert_eq!(p.logdet_covariance(), 0.0);
    }

    #[test]
    fn h1_prior_small_case() {
        let p = make_prior(PriorKind::H1, 1.0, 3, None).unwrap();
        // Hand-built LᵗL for the anchored difference matrix.
        let l = dmatrix![1.0, 0.0, 0.0; -1.0, 1.0, 0.0; 0.0, -1.0, 1.0];
        let expected = l.transpose() * &l;
        assert_eq!(
            expected,
            dmatrix![2.0, -1.0, 0.0; -1.0, 2.0, -1.0; 0.0, -1.0, 1.0]
        );
        assert_eq!(p.precision_matrix(), expected);
        // |L| = 1 so ln|C̄0| = 0.
        assert_relative_eq!(p.logdet_covariance(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn h1_2d_kronecker_sum() {
        let p = make_prior(PriorKind::H1_2D, 1.0, 4, None).unwrap();
        let l1 = dmatrix![1.0, 0.0; -1.0, 1.0];
        let i2 = DMatrix::<f64>::identity(2, 2);
        let mut l = DMatrix::zeros(4, 4);
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    for d in 0..2 {
                        l[(2 * a + c, 2 * b + d)] =
                            i2[(a, b)] * l1[(c, d)] + l1[(a, b)] * i2[(c, d)];
                    }
                }
            }
        }
        assert_eq!(p.structure().factor(), &l);
        assert!(make_prior(PriorKind::H1_2D, 1.0, 5, None).is_err());
    }

    #[test]
    fn alpha_scales_covariance() {
        let p = make_prior(PriorKind::H1, 4.0, 5, None).unwrap();
        let c0 = p.covariance_matrix();
        let prod = c0.as_matrix() * p.precision_matrix();
        assert!((prod - DMatrix::identity(5, 5)).amax() < 1e-12);
        assert_relative_eq!(p.logdet_covariance(), c0.logdet().unwrap(), epsilon = 1e-12);
        let x = DVector::from_fn(5, |i, _| i as f64 - 1.0);
        assert_relative_eq!(
            p.quad_form(&x),
            (x.transpose() * p.precision_matrix() * &x)[0],
            epsilon = 1e-12
        );
    }

    #[test]
    fn invalid_alpha() {
        assert!(matches!(
            make_prior(PriorKind::L2, 0.0, 2, None),
            Err(VgaError::InvalidAlpha(_))
        ));
        assert!(matches!(
            make_prior(PriorKind::L2, -1.0, 2, None),
            Err(VgaError::InvalidAlpha(_))
        ));
    }
}
