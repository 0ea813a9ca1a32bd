use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use statrs::function::gamma::ln_gamma;

use super::{ForwardOperator, PriorSpec};
use crate::error::{Result, VgaError};
use crate::linalg::LinearOperator;

/// Largest linear predictor `(aᵢ, x)` accepted when exponentiating rates.
pub const MAX_EXPONENT: f64 = 700.0;

/// Observed counts `y` with the cached `Σ ln(yᵢ!)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonData {
    counts: Vec<u64>,
    values: DVector<f64>,
    log_factorial_sum: f64,
}

impl PoissonData {
    pub fn new(counts: Vec<u64>) -> Self {
        let values = DVector::from_iterator(counts.len(), counts.iter().map(|&y| y as f64));
        let log_factorial_sum = counts.iter().map(|&y| ln_gamma(y as f64 + 1.0)).sum();
        Self {
            counts,
            values,
            log_factorial_sum,
        }
    }

    /// Accepts real values that are nonnegative integers.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let counts = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) {
                    Ok(v as u64)
                } else {
                    Err(VgaError::InvalidData(format!(
                        "count {v} at index {i} is not a nonnegative integer"
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(counts))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `y` as floating point.
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// `Σᵢ ln Γ(yᵢ + 1)`.
    pub fn log_factorial_sum(&self) -> f64 {
        self.log_factorial_sum
    }

    /// A copy with every count multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> Self {
        Self::new(self.counts.iter().map(|&y| y * factor).collect())
    }
}

fn check_shapes(x: &DVector<f64>, a: &ForwardOperator, data: &PoissonData) -> Result<()> {
    a.check_domain(x, "log_likelihood x")?;
    if data.len() != a.nrows() {
        return Err(VgaError::DimensionMismatch {
            context: "log_likelihood counts",
            expected: a.nrows(),
            found: data.len(),
        });
    }
    Ok(())
}

/// `(Ax, y) - (e^{Ax}, 1) - (ln y!, 1)`.
pub fn log_likelihood(x: &DVector<f64>, a: &ForwardOperator, data: &PoissonData) -> Result<f64> {
    check_shapes(x, a, data)?;
    let ax = a.apply(x);
    Ok(log_likelihood_from_predictor(&ax, data))
}

/// Same as [`log_likelihood`] given the linear predictor `Ax`.
pub fn log_likelihood_from_predictor(ax: &DVector<f64>, data: &PoissonData) -> f64 {
    ax.dot(data.values()) - ax.iter().map(|v| v.exp()).sum::<f64>() - data.log_factorial_sum()
}

/// Log density of `N(μ0, C0)` at `x`, normalizing constant included.
pub fn log_prior(x: &DVector<f64>, prior: &PriorSpec) -> Result<f64> {
    if x.len() != prior.dim() {
        return Err(VgaError::DimensionMismatch {
            context: "log_prior x",
            expected: prior.dim(),
            found: x.len(),
        });
    }
    let m = prior.dim() as f64;
    Ok(-0.5 * prior.quad_form(x)
        - 0.5 * m * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * prior.logdet_covariance())
}

/// `ln p(x, y) = ln p(y | x) + ln p(x)`.
pub fn log_joint(
    x: &DVector<f64>,
    a: &ForwardOperator,
    data: &PoissonData,
    prior: &PriorSpec,
) -> Result<f64> {
    Ok(log_likelihood(x, a, data)? + log_prior(x, prior)?)
}

/// Draws `yᵢ ~ Pois(exp((aᵢ, x)))` independently.
pub fn sample_poisson_data(
    a: &ForwardOperator,
    x_true: &DVector<f64>,
    seed: u64,
) -> Result<PoissonData> {
    a.check_domain(x_true, "sample_poisson_data x")?;
    let ax = a.apply(x_true);
    if let Some((index, &value)) = ax.iter().enumerate().find(|(_, v)| !(**v <= MAX_EXPONENT)) {
        return Err(VgaError::RateOverflow { index, value });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = ax
        .iter()
        .enumerate()
        .map(|(index, &eta)| {
            let lambda = eta.exp();
            if lambda == 0.0 {
                return Ok(0);
            }
            let dist =
                Poisson::new(lambda).map_err(|_| VgaError::RateOverflow { index, value: eta })?;
            let draw: f64 = dist.sample(&mut rng);
            Ok(draw as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PoissonData::new(counts))
}
