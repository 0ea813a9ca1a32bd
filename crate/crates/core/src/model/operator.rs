use nalgebra::{DMatrix, DVector};

use crate::error::{Result, VgaError};
use crate::linalg::{LinearOperator, LowRankFactor, SparsityMask};

/// The forward matrix `A` (`n × m`) in one of several representations.
///
/// All representations agree with their [`ForwardOperator::to_dense`]
/// materialization; the structured ones only avoid storing it.
#[derive(Debug, Clone)]
pub enum ForwardOperator {
    Dense(DMatrix<f64>),
    LowRank(LowRankFactor),
    Toeplitz(Toeplitz),
    Blur2d(GaussianBlur2d),
}

/// `A[i, j] = col[i - j]` for `i ≥ j`, `row[j - i]` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Toeplitz {
    col: DVector<f64>,
    row: DVector<f64>,
}

impl Toeplitz {
    pub fn new(col: DVector<f64>, row: DVector<f64>) -> Result<Self> {
        if col.is_empty() || row.is_empty() {
            return Err(VgaError::InvalidData("empty Toeplitz generator".into()));
        }
        if col[0] != row[0] {
            return Err(VgaError::InvalidData(
                "Toeplitz column and row disagree on the diagonal".into(),
            ));
        }
        Ok(Self { col, row })
    }

    pub fn symmetric(col: DVector<f64>) -> Self {
        Self {
            row: col.clone(),
            col,
        }
    }

    #[inline]
    fn entry(&self, i: usize, j: usize) -> f64 {
        if i >= j {
            self.col[i - j]
        } else {
            self.row[j - i]
        }
    }
}

/// Separable Gaussian blur on an `nx × ny` image with circular boundary,
/// pixels stored row-major (`index = p·ny + q`).
///
/// The point spread is `exp(-(dp² + dq²) / (2 variance)) / (2π variance)`
/// where `dp`, `dq` are circular distances, truncated to distances below
/// `band`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBlur2d {
    pub nx: usize,
    pub ny: usize,
    pub band: usize,
    pub variance: f64,
    wx: DMatrix<f64>,
    wy: DMatrix<f64>,
    scale: f64,
}

impl GaussianBlur2d {
    pub fn new(nx: usize, ny: usize, band: usize, variance: f64) -> Result<Self> {
        if nx == 0 || ny == 0 || band == 0 {
            return Err(VgaError::InvalidData(
                "blur needs positive sizes and band".into(),
            ));
        }
        if !(variance > 0.0) {
            return Err(VgaError::InvalidData(format!(
                "blur variance {variance} must be positive"
            )));
        }
        let circulant = |n: usize| {
            DMatrix::from_fn(n, n, |i, j| {
                let k = i.abs_diff(j);
                let dist = k.min(n - k);
                if dist < band {
                    (-((dist * dist) as f64) / (2.0 * variance)).exp()
                } else {
                    0.0
                }
            })
        };
        Ok(Self {
            nx,
            ny,
            band,
            variance,
            wx: circulant(nx),
            wy: circulant(ny),
            scale: 1.0 / (2.0 * std::f64::consts::PI * variance),
        })
    }

    fn apply_image(&self, x: &DVector<f64>) -> DVector<f64> {
        // Row-major image as an nx × ny matrix; Y = c Wx X Wy (both symmetric).
        let img = DMatrix::from_row_slice(self.nx, self.ny, x.as_slice());
        let out = (&self.wx * img * &self.wy) * self.scale;
        DVector::from_iterator(self.nx * self.ny, out.transpose().iter().copied())
    }

    fn row(&self, i: usize) -> DVector<f64> {
        let (p, q) = (i / self.ny, i % self.ny);
        DVector::from_fn(self.nx * self.ny, |k, _| {
            self.scale * self.wx[(p, k / self.ny)] * self.wy[(q, k % self.ny)]
        })
    }
}

impl ForwardOperator {
    pub fn nrows(&self) -> usize {
        match self {
            Self::Dense(a) => a.nrows(),
            Self::LowRank(f) => f.u.nrows(),
            Self::Toeplitz(t) => t.col.len(),
            Self::Blur2d(b) => b.nx * b.ny,
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Self::Dense(a) => a.ncols(),
            Self::LowRank(f) => f.v.nrows(),
            Self::Toeplitz(t) => t.row.len(),
            Self::Blur2d(b) => b.nx * b.ny,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Self::Dense(a) => a.clone(),
            Self::LowRank(f) => f.reconstruct(),
            Self::Toeplitz(t) => DMatrix::from_fn(t.col.len(), t.row.len(), |i, j| t.entry(i, j)),
            Self::Blur2d(b) => {
                let m = b.nx * b.ny;
                DMatrix::from_fn(m, m, |i, k| {
                    b.scale * b.wx[(i / b.ny, k / b.ny)] * b.wy[(i % b.ny, k % b.ny)]
                })
            }
        }
    }

    /// Row `aᵢ` as a dense vector.
    pub fn row(&self, i: usize) -> DVector<f64> {
        match self {
            Self::Dense(a) => a.row(i).transpose(),
            Self::LowRank(f) => {
                let us = f.u.row(i).component_mul(&f.s.transpose());
                (us * f.v.transpose()).transpose()
            }
            Self::Toeplitz(t) => DVector::from_fn(t.row.len(), |j, _| t.entry(i, j)),
            Self::Blur2d(b) => b.row(i),
        }
    }

    /// `(aᵢ, x)`.
    pub fn row_dot(&self, i: usize, x: &DVector<f64>) -> f64 {
        match self {
            Self::Dense(a) => a.row(i).transpose().dot(x),
            _ => self.row(i).dot(x),
        }
    }

    /// `diag(A C Aᵗ)` computed row by row as `aᵢᵗ C aᵢ`. With a mask, only
    /// the entries of `C` in the pattern take part.
    pub fn quad_diag(&self, c: &DMatrix<f64>, mask: Option<&SparsityMask>) -> DVector<f64> {
        let n = self.nrows();
        if let Self::LowRank(f) = self {
            // aᵢ = (U Σ)ᵢ Vᵗ, so aᵢᵗ C aᵢ = (UΣ)ᵢ (Vᵗ C V) (UΣ)ᵢᵗ.
            let cv = match mask {
                Some(mask) => masked_mul(c, mask, &f.v),
                None => c * &f.v,
            };
            let core = f.v.tr_mul(&cv);
            let us = f.scaled_u();
            let usc = &us * core;
            return DVector::from_fn(n, |i, _| usc.row(i).dot(&us.row(i)));
        }
        match mask {
            Some(mask) => {
                let a = self.to_dense_ref();
                DVector::from_fn(n, |i, _| {
                    let ai = a.row(i);
                    let mut acc = 0.0;
                    for j in 0..mask.dim() {
                        let aij = ai[j];
                        if aij == 0.0 {
                            continue;
                        }
                        let mut inner = 0.0;
                        for &k in mask.row(j) {
                            inner += c[(j, k)] * ai[k];
                        }
                        acc += aij * inner;
                    }
                    acc
                })
            }
            None => {
                let a = self.to_dense_ref();
                let ac = &*a * c;
                DVector::from_fn(n, |i, _| ac.row(i).dot(&a.row(i)))
            }
        }
    }

    /// `Aᵗ diag(d) A`.
    pub fn weighted_gram(&self, d: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Self::LowRank(f) => {
                let us = f.scaled_u();
                let mut dus = us.clone();
                for (i, mut row) in dus.row_iter_mut().enumerate() {
                    row.scale_mut(d[i]);
                }
                let k = us.tr_mul(&dus);
                let vk = &f.v * k;
                crate::linalg::symmetrize(&(vk * f.v.transpose()))
            }
            _ => {
                let a = self.to_dense_ref();
                let mut da = a.clone().into_owned();
                for (i, mut row) in da.row_iter_mut().enumerate() {
                    row.scale_mut(d[i]);
                }
                crate::linalg::symmetrize(&a.tr_mul(&da))
            }
        }
    }

    fn to_dense_ref(&self) -> std::borrow::Cow<'_, DMatrix<f64>> {
        match self {
            Self::Dense(a) => std::borrow::Cow::Borrowed(a),
            _ => std::borrow::Cow::Owned(self.to_dense()),
        }
    }

    /// Checks `x` has `ncols` entries.
    pub fn check_domain(&self, x: &DVector<f64>, context: &'static str) -> Result<()> {
        if x.len() != self.ncols() {
            return Err(VgaError::DimensionMismatch {
                context,
                expected: self.ncols(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

/// `C X` using only the entries of `C` inside the pattern.
pub(crate) fn masked_mul(c: &DMatrix<f64>, mask: &SparsityMask, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(c.nrows(), x.ncols());
    for (i, j) in mask.iter() {
        let cij = c[(i, j)];
        if cij != 0.0 {
            for k in 0..x.ncols() {
                out[(i, k)] += cij * x[(j, k)];
            }
        }
    }
    out
}

impl LinearOperator for ForwardOperator {
    fn nrows(&self) -> usize {
        ForwardOperator::nrows(self)
    }

    fn ncols(&self) -> usize {
        ForwardOperator::ncols(self)
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Dense(a) => a * x,
            Self::LowRank(f) => &f.u * f.v.tr_mul(x).component_mul(&f.s),
            Self::Toeplitz(t) => DVector::from_fn(t.col.len(), |i, _| {
                (0..t.row.len()).map(|j| t.entry(i, j) * x[j]).sum()
            }),
            Self::Blur2d(b) => b.apply_image(x),
        }
    }

    fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Dense(a) => a.tr_mul(y),
            Self::LowRank(f) => &f.v * f.u.tr_mul(y).component_mul(&f.s),
            Self::Toeplitz(t) => DVector::from_fn(t.row.len(), |j, _| {
                (0..t.col.len()).map(|i| t.entry(i, j) * y[i]).sum()
            }),
            // The blur is symmetric.
            Self::Blur2d(b) => b.apply_image(y),
        }
    }
}
