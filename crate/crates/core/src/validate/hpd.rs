use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::elbo::GaussianState;
use crate::error::{Result, VgaError};

/// Fewest samples accepted by [`hpd_intervals_samples`].
pub const MIN_HPD_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(VgaError::InvalidConfig(format!(
            "credible level {gamma} must lie in (0, 1)"
        )))
    }
}

/// `x̄ᵢ ± z_{(1+γ)/2} √Cᵢᵢ`, exact for a Gaussian.
pub fn hpd_intervals_gaussian(state: &GaussianState, gamma: f64) -> Result<Vec<Interval>> {
    check_gamma(gamma)?;
    let z = Normal::standard().inverse_cdf(0.5 * (1.0 + gamma));
    Ok((0..state.dim())
        .map(|i| {
            let half = z * state.cov.as_matrix()[(i, i)].max(0.0).sqrt();
            Interval {
                lower: state.mean[i] - half,
                upper: state.mean[i] + half,
            }
        })
        .collect())
}

/// Per column of `samples` (one sample per row), the narrowest interval
/// between order statistics that contains `⌈γN⌉` samples.
pub fn hpd_intervals_samples(samples: &DMatrix<f64>, gamma: f64) -> Result<Vec<Interval>> {
    check_gamma(gamma)?;
    let n = samples.nrows();
    if n < MIN_HPD_SAMPLES {
        return Err(VgaError::InsufficientSamples {
            have: n,
            need: MIN_HPD_SAMPLES,
        });
    }
    let k = ((gamma * n as f64).ceil() as usize).clamp(1, n);
    Ok(samples
        .column_iter()
        .map(|col| {
            let mut v: Vec<f64> = col.iter().copied().collect();
            v.sort_by(f64::total_cmp);
            let (mut best, mut lo) = (f64::INFINITY, 0);
            for i in 0..=n - k {
                let w = v[i + k - 1] - v[i];
                if w < best {
                    best = w;
                    lo = i;
                }
            }
            Interval {
                lower: v[lo],
                upper: v[lo + k - 1],
            }
        })
        .collect())
}
