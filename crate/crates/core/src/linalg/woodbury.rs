use nalgebra::{DMatrix, DVector};

use super::{LowRankFactor, SparsityMask, SpdMatrix};
use crate::error::{Result, VgaError};

/// What the Woodbury covariance update needs from the prior covariance `C0`:
/// block products and individual entries.
pub trait CovarianceServices {
    fn dim(&self) -> usize;
    /// `C0 X` for an `m × k` block.
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
    fn entry(&self, i: usize, j: usize) -> f64;
    fn logdet(&self) -> Result<f64>;
}

impl CovarianceServices for SpdMatrix {
    fn dim(&self) -> usize {
        SpdMatrix::dim(self)
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.as_matrix() * x
    }
    fn entry(&self, i: usize, j: usize) -> f64 {
        self.as_matrix()[(i, j)]
    }
    fn logdet(&self) -> Result<f64> {
        SpdMatrix::logdet(self)
    }
}

/// `(C0⁻¹ + Aᵗ D A)⁻¹` for `A = U Σ Vᵗ`, computed with the
/// Sherman–Morrison–Woodbury identity:
///
/// `C = C0 − C0 V K (I + G K)⁻¹ Vᵗ C0`, with `K = Σ Uᵗ D U Σ` and
/// `G = Vᵗ C0 V`.
///
/// Only an `r × r` system is solved. With a mask, only the entries in the
/// pattern are formed and every other entry of the result is zero; the
/// entries that are returned are the exact entries of the full update.
pub fn woodbury_cov<C: CovarianceServices + ?Sized>(
    c0: &C,
    factor: &LowRankFactor,
    d: &DVector<f64>,
    mask: Option<&SparsityMask>,
) -> Result<SpdMatrix> {
    woodbury_cov_logdet(c0, factor, d, mask).map(|(c, _)| c)
}

/// [`woodbury_cov`] together with `ln|C|` of the full update, from the
/// determinant lemma `ln|C| = ln|C0| - ln|I + K G|`.
pub fn woodbury_cov_logdet<C: CovarianceServices + ?Sized>(
    c0: &C,
    factor: &LowRankFactor,
    d: &DVector<f64>,
    mask: Option<&SparsityMask>,
) -> Result<(SpdMatrix, f64)> {
    let m = c0.dim();
    let n = factor.u.nrows();
    let r = factor.rank();
    if factor.v.nrows() != m {
        return Err(VgaError::DimensionMismatch {
            context: "woodbury_cov factor columns",
            expected: m,
            found: factor.v.nrows(),
        });
    }
    if d.len() != n {
        return Err(VgaError::DimensionMismatch {
            context: "woodbury_cov weights",
            expected: n,
            found: d.len(),
        });
    }
    if let Some(mask) = mask {
        if mask.dim() != m {
            return Err(VgaError::DimensionMismatch {
                context: "woodbury_cov mask",
                expected: m,
                found: mask.dim(),
            });
        }
    }
    if d.iter().any(|&x| !(x > 0.0)) {
        return Err(VgaError::InvalidData(
            "weights d must be strictly positive".into(),
        ));
    }

    let w = c0.apply_block(&factor.v); // m × r
    let us = factor.scaled_u(); // n × r, U Σ
    let mut dus = us.clone();
    for (i, mut row) in dus.row_iter_mut().enumerate() {
        row.scale_mut(d[i]);
    }
    let k = super::symmetrize(&us.tr_mul(&dus)); // Σ Uᵗ D U Σ
    let g = super::symmetrize(&factor.v.tr_mul(&w)); // Vᵗ C0 V

    // (I + K G) M = K  gives  M = (I + K G)⁻¹ K = K (I + G K)⁻¹.
    let inner = DMatrix::identity(r, r) + &k * &g;
    let lu = inner.lu();
    let u_diag = lu.u().diagonal();
    let scale = u_diag.amax();
    if scale == 0.0 || u_diag.iter().any(|v| v.abs() <= 1e-14 * scale) {
        return Err(VgaError::SingularInnerSystem);
    }
    // det(I + K G) = det(I + G^½ K G^½) > 0.
    let logdet_inner: f64 = u_diag.iter().map(|v| v.abs().ln()).sum();
    let logdet = c0.logdet()? - logdet_inner;
    let core = lu.solve(&k).ok_or(VgaError::SingularInnerSystem)?;
    let core = super::symmetrize(&core);

    let wm = &w * &core; // m × r
                         // Both paths evaluate each entry with the same expression, so masked
                         // entries are bitwise equal to the unmasked ones.
    let entry = |i: usize, j: usize| c0.entry(i, j) - wm.row(i).dot(&w.row(j));
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        let mut set = |j: usize| {
            let v = entry(i, j);
            out[(i, j)] = v;
            out[(j, i)] = v;
        };
        match mask {
            None => (i..m).for_each(&mut set),
            Some(mask) => mask
                .row(i)
                .iter()
                .filter(|&&j| j >= i)
                .for_each(|&j| set(j)),
        }
    }
    Ok((SpdMatrix::from_symmetrized(&out), logdet))
}
