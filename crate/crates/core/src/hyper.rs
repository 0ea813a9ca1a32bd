//! Hierarchical choice of the prior strength `α` under a `Gamma(a, b)`
//! hyperprior by alternating a full variational solve (E-step) with the
//! closed-form update of `α` (M-step).

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::elbo::{elbo, GaussianState};
use crate::error::{Result, VgaError};
use crate::model::{PoissonProblem, PriorStructure};
use crate::vga::{initial_state, prepare_problem, run_vga_from, VgaConfig};

/// `α` below this is treated as a collapse of the prior.
pub const ALPHA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct HyperConfig {
    pub a: f64,
    pub b: f64,
    pub alpha_init: f64,
    pub max_em: usize,
    pub alpha_tol: f64,
    pub vga: VgaConfig,
}

impl Default for HyperConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1e-4,
            alpha_init: 1.0,
            max_em: 100,
            alpha_tol: 1e-8,
            vga: VgaConfig::default(),
        }
    }
}

impl HyperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0) {
            return Err(VgaError::InvalidConfig(format!(
                "hyperprior needs a > 0 and b > 0, got a = {}, b = {}",
                self.a, self.b
            )));
        }
        if !(self.alpha_init > 0.0) {
            return Err(VgaError::InvalidAlpha(self.alpha_init));
        }
        if !(self.alpha_tol > 0.0) || self.max_em == 0 {
            return Err(VgaError::InvalidConfig(
                "alpha_tol and max_em must be positive".into(),
            ));
        }
        Ok(())
    }

    /// `(m + 2(a - 1)) / (2b)`, the bound on every EM iterate.
    pub fn alpha_upper_bound(&self, m: usize) -> f64 {
        (m as f64 + 2.0 * (self.a - 1.0)) / (2.0 * self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperFlag {
    /// `α*` exceeds half of its theoretical upper bound, which suggests the
    /// uninteresting fixed point near infinity.
    PossiblyDegenerateFixedPoint,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HyperTrace {
    /// `αᵏ` used in the k-th E-step; the last entry is `α*`.
    pub alpha_sequence: Vec<f64>,
    /// `ψ(x̄ᵏ, Cᵏ)` after the k-th E-step.
    pub psi_sequence: Vec<f64>,
    /// The joint bound at `(x̄ᵏ, Cᵏ, αᵏ)`.
    pub joint_bound_sequence: Vec<f64>,
    pub converged: bool,
    pub flags: Vec<HyperFlag>,
}

#[derive(Debug, Clone)]
pub struct HierarchicalResult {
    pub state: GaussianState,
    pub alpha: f64,
    pub trace: HyperTrace,
}

/// `ln(bᵃ / Γ(a)) + (a - 1) ln α - α b`, the hyperprior part of the joint
/// bound.
pub fn hyperprior_offset(alpha: f64, a: f64, b: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(VgaError::InvalidAlpha(alpha));
    }
    Ok((a - 1.0) * alpha.ln() - alpha * b + a * b.ln() - ln_gamma(a))
}

/// `F(x̄, C, α) = F_α(x̄, C) + (a - 1) ln α - α b + ln(bᵃ/Γ(a))`, where
/// `F_α` is the lower bound under the prior `N(μ0, α⁻¹C̄0)` and so already
/// carries the `(m/2) ln α` term. The α of `problem` is replaced by `alpha`.
pub fn joint_lower_bound(
    state: &GaussianState,
    alpha: f64,
    problem: &PoissonProblem,
    a: f64,
    b: f64,
) -> Result<f64> {
    let p = problem.with_alpha(alpha)?;
    Ok(elbo(state, &p)?.total + hyperprior_offset(alpha, a, b)?)
}

/// `ψ = -½ (x̄ - μ0)ᵗ C̄0⁻¹ (x̄ - μ0) - ½ tr(C̄0⁻¹ C) ≤ 0`.
pub fn psi(state: &GaussianState, structure: &PriorStructure) -> f64 {
    -0.5 * structure.base_quad(&state.mean) - 0.5 * structure.base_trace(state.cov.as_matrix())
}

/// The split `F_α = φ + α ψ` at the α of `problem`; `φ` collects every
/// term of the bound that does not multiply `α` linearly, including
/// `(m/2) ln α`.
pub fn phi_psi(state: &GaussianState, problem: &PoissonProblem) -> Result<(f64, f64)> {
    let psi = psi(state, problem.prior.structure());
    let f = elbo(state, problem)?.total;
    Ok((f - problem.prior.alpha() * psi, psi))
}

/// `α = (m + 2(a - 1)) / ((x̄ - μ0)ᵗC̄0⁻¹(x̄ - μ0) + tr(C̄0⁻¹C) + 2b)`.
pub fn update_alpha(
    state: &GaussianState,
    structure: &PriorStructure,
    a: f64,
    b: f64,
) -> Result<f64> {
    let m = structure.dim() as f64;
    let denom =
        structure.base_quad(&state.mean) + structure.base_trace(state.cov.as_matrix()) + 2.0 * b;
    if !(denom > 0.0) {
        return Err(VgaError::NonpositiveDenominator(denom));
    }
    Ok((m + 2.0 * (a - 1.0)) / denom)
}

/// EM iteration on `α` with warm-started E-steps, followed by a last E-step
/// at the returned `α*`.
///
/// Hitting `max_em` is not an error: the result carries `converged = false`.
pub fn run_hierarchical(problem: &PoissonProblem, cfg: &HyperConfig) -> Result<HierarchicalResult> {
    cfg.validate()?;
    let mut alpha = cfg.alpha_init;
    let working = prepare_problem(&problem.with_alpha(alpha)?, &cfg.vga)?;
    let structure = working.prior.structure().clone();
    let mut state = initial_state(&working, &cfg.vga)?;
    let mut trace = HyperTrace::default();

    let e_step =
        |alpha: f64, state: GaussianState, trace: &mut HyperTrace| -> Result<GaussianState> {
            let p = working.with_alpha(alpha)?;
            let (next, _) = run_vga_from(&p, &cfg.vga, state)?;
            trace.alpha_sequence.push(alpha);
            trace.psi_sequence.push(psi(&next, &structure));
            trace
                .joint_bound_sequence
                .push(elbo(&next, &p)?.total + hyperprior_offset(alpha, cfg.a, cfg.b)?);
            Ok(next)
        };

    for _ in 0..cfg.max_em {
        state = e_step(alpha, state, &mut trace)?;
        let next = update_alpha(&state, &structure, cfg.a, cfg.b)?;
        if !(next >= ALPHA_FLOOR) {
            return Err(VgaError::AlphaCollapse(next));
        }
        let change = (next - alpha).abs();
        alpha = next;
        if change < cfg.alpha_tol * alpha {
            trace.converged = true;
            break;
        }
    }
    state = e_step(alpha, state, &mut trace)?;
    if alpha > 0.5 * cfg.alpha_upper_bound(problem.dim()) {
        trace.flags.push(HyperFlag::PossiblyDegenerateFixedPoint);
    }
    Ok(HierarchicalResult {
        state,
        alpha,
        trace,
    })
}

/// The joint bound maximized over `(x̄, C)` at fixed `α`, i.e. one E-step
/// from `warm` (or the configured start) followed by evaluation.
pub fn profiled_joint_bound(
    problem: &PoissonProblem,
    alpha: f64,
    cfg: &HyperConfig,
    warm: Option<&GaussianState>,
) -> Result<(f64, GaussianState)> {
    let p = prepare_problem(&problem.with_alpha(alpha)?, &cfg.vga)?;
    let init = match warm {
        Some(s) => s.clone(),
        None => initial_state(&p, &cfg.vga)?,
    };
    let (state, _) = run_vga_from(&p, &cfg.vga, init)?;
    let j = elbo(&state, &p)?.total + hyperprior_offset(alpha, cfg.a, cfg.b)?;
    Ok((j, state))
}

/// `points` log-spaced values from `center / spread` to `center · spread`.
pub fn log_grid(center: f64, spread: f64, points: usize) -> Vec<f64> {
    let (lo, hi) = ((center / spread).ln(), (center * spread).ln());
    (0..points)
        .map(|i| (lo + (hi - lo) * i as f64 / (points.max(2) - 1) as f64).exp())
        .collect()
}
