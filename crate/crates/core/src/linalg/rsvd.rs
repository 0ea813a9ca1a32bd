use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::LinearOperator;
use crate::error::{Result, VgaError};

/// Relative singular-value cutoff used by [`suggest_rank`].
pub const DEFAULT_RANK_THRESHOLD: f64 = 1e-6;

/// Truncated factorization `A ≈ U diag(s) Vᵗ`.
///
/// `u` is `n × r` and `v` is `m × r`, both with orthonormal columns; `s` is
/// nonnegative and sorted nonincreasingly.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactor {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl LowRankFactor {
    pub fn new(u: DMatrix<f64>, s: DVector<f64>, v: DMatrix<f64>) -> Result<Self> {
        let r = s.len();
        if u.ncols() != r || v.ncols() != r {
            return Err(VgaError::DimensionMismatch {
                context: "LowRankFactor::new",
                expected: r,
                found: if u.ncols() != r { u.ncols() } else { v.ncols() },
            });
        }
        if s.iter().any(|&x| !(x >= 0.0)) || s.as_slice().windows(2).any(|w| w[0] < w[1]) {
            return Err(VgaError::InvalidData(
                "singular values must be nonnegative and nonincreasing".into(),
            ));
        }
        Ok(Self { u, s, v })
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// Dense `U diag(s) Vᵗ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, &sj) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(sj);
        }
        us * self.v.transpose()
    }

    /// `U diag(s)`, the left factor with singular values folded in.
    pub fn scaled_u(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, &sj) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(sj);
        }
        us
    }
}

impl LinearOperator for LowRankFactor {
    fn nrows(&self) -> usize {
        self.u.nrows()
    }
    fn ncols(&self) -> usize {
        self.v.nrows()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let coeffs = self.v.tr_mul(x).component_mul(&self.s);
        &self.u * coeffs
    }
    fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        let coeffs = self.u.tr_mul(y).component_mul(&self.s);
        &self.v * coeffs
    }
}

/// Settings of the randomized range finder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsvdOptions {
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for RsvdOptions {
    fn default() -> Self {
        Self {
            oversample: 10,
            power_iters: 2,
            seed: 0,
        }
    }
}

fn orthonormal_basis(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

/// Randomized SVD with a Gaussian test matrix and subspace (power)
/// iterations, re-orthonormalized after every application of `A` or `Aᵗ`.
///
/// The result is a deterministic function of `(A, rank, opts)`.
pub fn rsvd<A: LinearOperator + ?Sized>(
    op: &A,
    rank: usize,
    opts: &RsvdOptions,
) -> Result<LowRankFactor> {
    let (n, m) = (op.nrows(), op.ncols());
    let max = n.min(m);
    if rank == 0 || rank > max {
        return Err(VgaError::RankTooLarge { rank, max });
    }
    let k = (rank + opts.oversample).min(max);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let omega = DMatrix::from_fn(m, k, |_, _| StandardNormal.sample(&mut rng));

    let mut q = orthonormal_basis(op.apply_mat(&omega));
    for _ in 0..opts.power_iters {
        let z = orthonormal_basis(op.apply_transpose_mat(&q));
        q = orthonormal_basis(op.apply_mat(&z));
    }
    // B = Qᵗ A, formed as (Aᵗ Q)ᵗ so only operator products are needed.
    let bt = op.apply_transpose_mat(&q); // m × k
    let svd = bt.svd(true, true);
    let (ub, vbt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(VgaError::InvalidData("SVD failed to converge".into())),
    };
    // Bᵗ = ub Σ vbt  =>  B = vbtᵗ Σ ubᵗ, so A ≈ (Q vbtᵗ) Σ ubᵗ.
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    order.truncate(rank);

    let left = &q * vbt.transpose();
    let u = DMatrix::from_fn(n, rank, |i, j| left[(i, order[j])]);
    let v = DMatrix::from_fn(m, rank, |i, j| ub[(i, order[j])]);
    let s = DVector::from_fn(rank, |j, _| svd.singular_values[order[j]].max(0.0));
    LowRankFactor::new(u, s, v)
}

/// Number of singular values with `σ_i / σ_1 ≥ threshold`.
pub fn suggest_rank(singular_values: &[f64], threshold: f64) -> usize {
    let Some(&top) = singular_values.iter().max_by(|a, b| a.total_cmp(b)) else {
        return 0;
    };
    if top <= 0.0 {
        return 0;
    }
    singular_values
        .iter()
        .filter(|&&s| s / top >= threshold)
        .count()
}
