use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::hpd::{hpd_intervals_samples, Interval};
use crate::elbo::GaussianState;
use crate::error::{Result, VgaError};
use crate::linalg::SpdMatrix;
use crate::model::{PoissonProblem, MAX_EXPONENT};

/// Largest proposal dimension the sampler will factor.
pub const MAX_SAMPLING_DIM: usize = 5000;

/// Number of batches for the batch-means standard errors.
const BATCHES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub chain_length: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Keep the post-burn-in samples (thinned) in the summary.
    pub store_samples: bool,
    /// Credible level of the sample intervals.
    pub gamma: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chain_length: 200_000,
            burn_in: 100_000,
            seed: 0,
            store_samples: false,
            gamma: 0.9,
        }
    }
}

impl McmcConfig {
    /// Stored samples are every 10th above 1000 unknowns, all otherwise.
    pub fn thinning(&self, m: usize) -> usize {
        if m > 1000 {
            10
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Accepted proposals over all `chain_length` steps.
    pub acceptance_rate: f64,
    /// Batch-means standard error of each coordinate of `mean`.
    pub mean_standard_error: DVector<f64>,
    /// Post-burn-in draws the moments are computed from.
    pub n_samples: usize,
    pub thin: usize,
    /// Stored draws, one per row (only with `store_samples`).
    pub samples: Option<DMatrix<f64>>,
    /// Per-coordinate intervals at `gamma` from the stored draws.
    pub intervals: Option<Vec<Interval>>,
}

impl ChainSummary {
    /// Chain moments as a Gaussian.
    pub fn as_gaussian(&self) -> Result<GaussianState> {
        GaussianState::new(
            self.mean.clone(),
            SpdMatrix::from_symmetrized(&self.covariance),
        )
    }
}

/// Metropolis–Hastings with the fixed Gaussian `proposal` as independence
/// proposal, targeting `p(x | y)`.
///
/// A draw `x' = x̄ + Lz` is accepted with probability
/// `min{1, p(x', y) q(x) / (p(x, y) q(x'))}`; `ln q` reduces to `-zᵗz/2`.
/// Draws whose rates would overflow are rejected. The chain starts at the
/// proposal mean.
pub fn mh_independence_sampler(
    problem: &PoissonProblem,
    proposal: &GaussianState,
    cfg: &McmcConfig,
) -> Result<ChainSummary> {
    let m = problem.dim();
    if proposal.dim() != m {
        return Err(VgaError::DimensionMismatch {
            context: "mh proposal",
            expected: m,
            found: proposal.dim(),
        });
    }
    if cfg.burn_in >= cfg.chain_length {
        return Err(VgaError::InvalidConfig(
            "burn_in must be smaller than chain_length".into(),
        ));
    }
    if m > MAX_SAMPLING_DIM {
        return Err(VgaError::CovTooLargeForSampling { dim: m });
    }
    let l = proposal.cov.cholesky()?.into_l();
    let a = problem.operator.to_dense();
    let y = problem.data.values();
    let prior = &problem.prior;

    let log_target = |x: &DVector<f64>| -> Option<f64> {
        let ax = &a * x;
        let mut ll = 0.0;
        for (eta, yi) in ax.iter().zip(y.iter()) {
            if *eta > MAX_EXPONENT {
                return None;
            }
            ll += eta * yi - eta.exp();
        }
        Some(ll - 0.5 * prior.quad_form(x))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = proposal.mean.clone();
    let mut log_w = log_target(&x).ok_or(VgaError::RateOverflow {
        index: 0,
        value: f64::INFINITY,
    })?;
    // log weight = ln p(x, y) - ln q(x); at the mean ln q ∝ 0.

    let kept = cfg.chain_length - cfg.burn_in;
    let thin = cfg.thinning(m);
    let batch_len = (kept / BATCHES).max(1);
    let mut accepted = 0usize;
    let mut count = 0usize;
    let mut mean = DVector::zeros(m);
    let mut m2 = DMatrix::zeros(m, m);
    let mut batch_sum = DVector::zeros(m);
    let mut batch_means: Vec<DVector<f64>> = Vec::new();
    let mut stored: Vec<DVector<f64>> = Vec::new();
    let mut z = DVector::zeros(m);

    for step in 0..cfg.chain_length {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let candidate = &proposal.mean + &l * &z;
        let u: f64 = rng.random();
        if let Some(lt) = log_target(&candidate) {
            let cand_w = lt + 0.5 * z.norm_squared();
            if u.ln() < cand_w - log_w {
                x = candidate;
                log_w = cand_w;
                accepted += 1;
            }
        }
        if step >= cfg.burn_in {
            count += 1;
            let delta = &x - &mean;
            mean += &delta / count as f64;
            let delta2 = &x - &mean;
            m2.ger(1.0, &delta, &delta2, 1.0);
            batch_sum += &x;
            if count.is_multiple_of(batch_len) && batch_means.len() < BATCHES {
                batch_means.push(&batch_sum / batch_len as f64);
                batch_sum.fill(0.0);
            }
            if cfg.store_samples && (step - cfg.burn_in).is_multiple_of(thin) {
                stored.push(x.clone());
            }
        }
    }

    let covariance = crate::linalg::symmetrize(&(m2 / (count.max(2) - 1) as f64));
    let b = batch_means.len();
    let mean_standard_error = if b >= 2 {
        let bm = batch_means.iter().fold(DVector::zeros(m), |acc, v| acc + v) / b as f64;
        let var = batch_means
            .iter()
            .fold(DVector::zeros(m), |acc, v| acc + (v - &bm).map(|d| d * d))
            / (b - 1) as f64;
        var.map(|v| (v / b as f64).sqrt())
    } else {
        DVector::from_element(m, f64::NAN)
    };
    let samples = cfg
        .store_samples
        .then(|| DMatrix::from_fn(stored.len(), m, |i, j| stored[i][j]));
    let intervals = match &samples {
        Some(s) if s.nrows() >= super::hpd::MIN_HPD_SAMPLES => {
            Some(hpd_intervals_samples(s, cfg.gamma)?)
        }
        _ => None,
    };
    Ok(ChainSummary {
        mean,
        covariance,
        acceptance_rate: accepted as f64 / cfg.chain_length as f64,
        mean_standard_error,
        n_samples: count,
        thin,
        samples,
        intervals,
    })
}
