//! The closed-form evidence lower bound of a Gaussian `q = N(x̄, C)`, its
//! gradients, and Gaussian divergences.

mod quadrature;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use quadrature::{evidence_quadrature, laplace_log_evidence, QuadratureOptions};

use crate::error::{Result, VgaError};
use crate::linalg::{LinearOperator, SparsityMask, SpdMatrix};
use crate::model::{ForwardOperator, PoissonProblem, MAX_EXPONENT};

/// A Gaussian `N(mean, cov)`, optionally restricted to a covariance pattern.
///
/// With a mask, `cov` holds the pattern entries of a full covariance and
/// zeros elsewhere; every product with `C` uses only the pattern. The
/// truncated matrix need not be positive definite, so `ln|C|` of the full
/// covariance is kept alongside it.
#[derive(Debug, Clone)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: SpdMatrix,
    pub mask: Option<Arc<SparsityMask>>,
    logdet: Option<f64>,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(VgaError::DimensionMismatch {
                context: "GaussianState",
                expected: mean.len(),
                found: cov.dim(),
            });
        }
        Ok(Self {
            mean,
            cov,
            mask: None,
            logdet: None,
        })
    }

    /// Attaches a mask and zeroes the covariance outside it. The current
    /// covariance must be positive definite.
    pub fn with_mask(mut self, mask: Arc<SparsityMask>) -> Result<Self> {
        if mask.dim() != self.dim() {
            return Err(VgaError::DimensionMismatch {
                context: "GaussianState mask",
                expected: self.dim(),
                found: mask.dim(),
            });
        }
        let logdet = self.cov_logdet()?;
        self.cov = SpdMatrix::from_symmetrized(&mask.select(self.cov.as_matrix()));
        self.mask = Some(mask);
        self.logdet = Some(logdet);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mask(&self) -> Option<&SparsityMask> {
        self.mask.as_deref()
    }

    /// Replaces the covariance. `logdet` is `ln|C|` of the full matrix whose
    /// pattern entries `cov` holds; without it `ln|C|` is computed from `cov`.
    pub fn set_cov(&mut self, cov: SpdMatrix, logdet: Option<f64>) {
        self.cov = cov;
        self.logdet = logdet;
    }

    /// `ln|C|`, from the stored value when there is one.
    pub fn cov_logdet(&self) -> Result<f64> {
        match self.logdet {
            Some(v) => Ok(v),
            None => self.cov.logdet(),
        }
    }
}

/// The bound split into its interpretable parts.
///
/// `total = fit - mean_penalty - cov_penalty_bregman / 2 - ln_y_factorial`
/// and equivalently
/// `total = fit - mean_penalty - tr(C0⁻¹C)/2 + ln|C|/2 + constants`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElboBreakdown {
    /// `(y, Ax̄) - (1, e^d)`.
    pub fit: f64,
    /// `½ (x̄ - μ0)ᵗ C0⁻¹ (x̄ - μ0)`.
    pub mean_penalty: f64,
    /// `tr(C0⁻¹C) - ln|C0⁻¹C| - m`.
    pub cov_penalty_bregman: f64,
    /// `-½ ln|C0| + m/2 - (1, ln y!)`.
    pub constants: f64,
    /// `(1, ln y!)`.
    pub ln_y_factorial: f64,
    pub total: f64,
    /// Some rate exponent was clamped at the overflow guard.
    pub saturated: bool,
}

fn check_state(state: &GaussianState, a: &ForwardOperator) -> Result<()> {
    a.check_domain(&state.mean, "state mean")?;
    if state.cov.dim() != state.dim() {
        return Err(VgaError::DimensionMismatch {
            context: "state covariance",
            expected: state.dim(),
            found: state.cov.dim(),
        });
    }
    Ok(())
}

/// `d = Ax̄ + ½ diag(A C Aᵗ)`, row by row.
pub fn rate_vector(state: &GaussianState, a: &ForwardOperator) -> Result<DVector<f64>> {
    check_state(state, a)?;
    Ok(a.apply(&state.mean) + a.quad_diag(state.cov.as_matrix(), state.mask()) * 0.5)
}

/// `e^d` with each exponent clamped at the overflow guard. The flag reports
/// whether any clamp happened.
pub fn exp_clamped(d: &DVector<f64>) -> (DVector<f64>, bool) {
    let mut saturated = false;
    let e = d.map(|v| {
        if v > MAX_EXPONENT {
            saturated = true;
            MAX_EXPONENT.exp()
        } else {
            v.exp()
        }
    });
    (e, saturated)
}

pub fn elbo(state: &GaussianState, problem: &PoissonProblem) -> Result<ElboBreakdown> {
    let a = &*problem.operator;
    check_state(state, a)?;
    let prior = &problem.prior;
    let m = state.dim() as f64;
    let ax = a.apply(&state.mean);
    let d = &ax + a.quad_diag(state.cov.as_matrix(), state.mask()) * 0.5;
    let (ed, saturated) = exp_clamped(&d);

    let fit = problem.data.values().dot(&ax) - ed.sum();
    let mean_penalty = 0.5 * prior.quad_form(&state.mean);
    let trace = prior.trace_precision(state.cov.as_matrix());
    let logdet_c = state.cov_logdet()?;
    let logdet_c0 = prior.logdet_covariance();
    let bregman = trace - (logdet_c - logdet_c0) - m;
    let ln_y_factorial = problem.data.log_factorial_sum();
    let constants = -0.5 * logdet_c0 + 0.5 * m - ln_y_factorial;
    let total = fit - mean_penalty - 0.5 * trace + 0.5 * logdet_c + constants;
    Ok(ElboBreakdown {
        fit,
        mean_penalty,
        cov_penalty_bregman: bregman,
        constants,
        ln_y_factorial,
        total,
        saturated,
    })
}

/// `∂F/∂x̄ = Aᵗ(y - e^d) - C0⁻¹(x̄ - μ0)`.
pub fn grad_mean(state: &GaussianState, problem: &PoissonProblem) -> Result<DVector<f64>> {
    let (ed, _) = exp_clamped(&rate_vector(state, &problem.operator)?);
    let resid = problem.data.values() - ed;
    Ok(problem.operator.apply_transpose(&resid)
        - problem
            .prior
            .apply_precision(&(&state.mean - problem.prior.mu0())))
}

/// `∂F/∂C = ½ (C⁻¹ - Aᵗ D A - C0⁻¹)` with `D = diag(e^d)`.
pub fn grad_cov(state: &GaussianState, problem: &PoissonProblem) -> Result<DMatrix<f64>> {
    Ok(cov_stationarity(state, problem)? * 0.5)
}

/// `C⁻¹ - AᵗDA - C0⁻¹`.
fn cov_stationarity(state: &GaussianState, problem: &PoissonProblem) -> Result<DMatrix<f64>> {
    let (ed, _) = exp_clamped(&rate_vector(state, &problem.operator)?);
    let cinv = state.cov.inverse()?;
    let gram = problem.operator.weighted_gram(&ed);
    Ok(crate::linalg::symmetrize(
        &(cinv.into_inner() - gram - problem.prior.precision_matrix()),
    ))
}

/// `(‖∂F/∂x̄‖₂, ‖C⁻¹ - AᵗDA - C0⁻¹‖_F)`; both vanish exactly at the maximizer.
pub fn optimality_residual(state: &GaussianState, problem: &PoissonProblem) -> Result<(f64, f64)> {
    Ok((
        grad_mean(state, problem)?.norm(),
        cov_stationarity(state, problem)?.norm(),
    ))
}

/// `d(C, C0) = tr(C0⁻¹C) - ln|C0⁻¹C| - m ≥ 0`.
pub fn bregman_divergence(c: &SpdMatrix, c0: &SpdMatrix) -> Result<f64> {
    if c.dim() != c0.dim() {
        return Err(VgaError::DimensionMismatch {
            context: "bregman_divergence",
            expected: c0.dim(),
            found: c.dim(),
        });
    }
    let f0 = c0.cholesky()?;
    let trace = f0.solve_mat(c.as_matrix()).trace();
    let logdet_c = c.logdet()?;
    Ok(trace - (logdet_c - f0.logdet()) - c.dim() as f64)
}

/// `KL(q1 ‖ q2) = ½ [d(C1, C2) + (x̄1 - x̄2)ᵗ C2⁻¹ (x̄1 - x̄2)]`.
pub fn gaussian_kl(q1: &GaussianState, q2: &GaussianState) -> Result<f64> {
    if q1.dim() != q2.dim() {
        return Err(VgaError::DimensionMismatch {
            context: "gaussian_kl",
            expected: q2.dim(),
            found: q1.dim(),
        });
    }
    let diff = &q1.mean - &q2.mean;
    let f2 = q2.cov.cholesky()?;
    let maha = diff.dot(&f2.solve(&diff));
    Ok(0.5 * (bregman_divergence(&q1.cov, &q2.cov)? + maha))
}
