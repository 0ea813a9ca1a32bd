use nalgebra::{DMatrix, DVector};

use crate::error::{Result, VgaError};

const SYMMETRY_TOL: f64 = 1e-12;

/// `(M + Mᵗ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// A dense symmetric matrix intended to be positive definite.
///
/// Symmetry is enforced on construction; definiteness is checked lazily by
/// [`SpdMatrix::cholesky`], since iterates of the solvers are produced by
/// formulas that guarantee it in exact arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    /// Wraps `m` after checking it is square and symmetric to `1e-12`
    /// relative. The stored matrix is the exact symmetric part.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(VgaError::DimensionMismatch {
                context: "SpdMatrix::new",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(VgaError::NotSymmetric { asymmetry: asym });
        }
        Ok(Self(symmetrize(&m)))
    }

    /// Symmetrizes `m` unconditionally. Used after solver updates to remove
    /// roundoff drift.
    pub fn from_symmetrized(m: &DMatrix<f64>) -> Self {
        Self(symmetrize(m))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &DVector<f64>) -> Self {
        Self(DMatrix::from_diagonal(diag))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(&self.0 * factor)
    }

    pub fn cholesky(&self) -> Result<CholeskyFactor> {
        CholeskyFactor::new(&self.0)
    }

    pub fn logdet(&self) -> Result<f64> {
        Ok(self.cholesky()?.logdet())
    }

    pub fn inverse(&self) -> Result<SpdMatrix> {
        Ok(SpdMatrix::from_symmetrized(&self.cholesky()?.inverse()))
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵗ = M`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    l: DMatrix<f64>,
}

impl CholeskyFactor {
    /// Column-oriented (left-looking) factorization. Fails on the first pivot
    /// that is not strictly positive.
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(VgaError::DimensionMismatch {
                context: "cholesky",
                expected: n,
                found: m.ncols(),
            });
        }
        let mut l = m.lower_triangle();
        for j in 0..n {
            // Column j gets the updates from all previous columns.
            for k in 0..j {
                let ljk = l[(j, k)];
                if ljk == 0.0 {
                    continue;
                }
                let (left, mut right) = l.columns_range_pair_mut(k, j);
                let src = left.rows(j, n - j);
                let mut dst = right.rows_mut(j, n - j);
                dst.axpy(-ljk, &src, 1.0);
            }
            let pivot = l[(j, j)];
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(VgaError::NotPositiveDefinite { index: j, pivot });
            }
            let d = pivot.sqrt();
            let mut col = l.view_mut((j, j), (n - j, 1));
            col /= d;
        }
        Ok(Self { l })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn into_l(self) -> DMatrix<f64> {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `ln |M| = 2 Σ ln L_ii`.
    pub fn logdet(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Ratio of extreme pivots squared; a lower bound on the 2-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        let diag = self.l.diagonal();
        let max = diag.iter().cloned().fold(0.0_f64, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        (max / min).powi(2)
    }

    /// Solves `L z = b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut z = b.clone();
        self.l.solve_lower_triangular_mut(&mut z);
        z
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.l.solve_lower_triangular_mut(&mut x);
        self.l.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.l.solve_lower_triangular_mut(&mut x);
        self.l.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// `L⁻¹`.
    pub fn lower_inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut linv = DMatrix::identity(n, n);
        self.l.solve_lower_triangular_mut(&mut linv);
        linv
    }

    /// `M⁻¹ = L⁻ᵗ L⁻¹`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let linv = self.lower_inverse();
        symmetrize(&linv.tr_mul(&linv))
    }
}

/// Lower Cholesky factor of an SPD matrix.
pub fn cholesky(m: &SpdMatrix) -> Result<DMatrix<f64>> {
    Ok(m.cholesky()?.into_l())
}

/// Log-determinant of an SPD matrix via its Cholesky factor.
pub fn logdet(m: &SpdMatrix) -> Result<f64> {
    m.logdet()
}
