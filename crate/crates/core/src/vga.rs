//! Alternating maximization of the lower bound: damped Newton steps for the
//! mean and fixed-point steps `C ← (C0⁻¹ + AᵗDA)⁻¹` for the covariance.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::elbo::{elbo, exp_clamped, optimality_residual, GaussianState};
use crate::error::{Result, VgaError};
use crate::linalg::{
    pcg_solve, rsvd, suggest_rank, woodbury_cov_logdet, LinearOperator, PcgOptions, RsvdOptions,
    SparsityMask, SpdMatrix, DEFAULT_RANK_THRESHOLD,
};
use crate::model::{ForwardOperator, PoissonProblem};

/// Largest dimension for which dense covariance residuals are reported.
const DENSE_RESIDUAL_MAX_DIM: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    Dense,
    #[serde(rename = "lowrank")]
    LowRank,
    #[serde(rename = "lowrank_sparse")]
    LowRankSparse,
}

impl std::str::FromStr for SolverMode {
    type Err = VgaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Self::Dense),
            "lowrank" => Ok(Self::LowRank),
            "lowrank_sparse" => Ok(Self::LowRankSparse),
            other => Err(VgaError::InvalidConfig(format!(
                "unknown solver mode `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for SolverMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Dense => "dense",
            Self::LowRank => "lowrank",
            Self::LowRankSparse => "lowrank_sparse",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitCov {
    Identity,
    Prior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCriterion {
    /// `|F_k - F_{k-1}| < outer_tol_elbo`.
    ElboChange,
    /// `‖x̄_k - x̄_{k-1}‖ / ‖x̄_k‖ < mean_change_tol`.
    MeanChange,
}

#[derive(Debug, Clone)]
pub struct VgaConfig {
    pub max_outer: usize,
    pub newton_steps_per_outer: usize,
    pub fixedpoint_steps_per_outer: usize,
    pub outer_tol_elbo: f64,
    pub mean_change_tol: f64,
    pub stop: StopCriterion,
    pub pcg: PcgOptions,
    pub mode: SolverMode,
    pub rank: Option<usize>,
    pub mask: Option<Arc<SparsityMask>>,
    pub init_mean: Option<DVector<f64>>,
    pub init_cov: InitCov,
    pub rsvd: RsvdOptions,
    /// Step halvings allowed when a Newton step fails to reduce `‖G‖`.
    pub max_halvings: usize,
    /// Abort with `IllConditioned` above this condition estimate of
    /// `C0⁻¹ + AᵗDA`.
    pub condition_limit: f64,
}

impl Default for VgaConfig {
    fn default() -> Self {
        Self {
            max_outer: 50,
            newton_steps_per_outer: 5,
            fixedpoint_steps_per_outer: 1,
            outer_tol_elbo: 1e-10,
            mean_change_tol: 1e-8,
            stop: StopCriterion::ElboChange,
            pcg: PcgOptions::default(),
            mode: SolverMode::Dense,
            rank: None,
            mask: None,
            init_mean: None,
            init_cov: InitCov::Identity,
            rsvd: RsvdOptions::default(),
            max_halvings: 20,
            condition_limit: 1e14,
        }
    }
}

impl VgaConfig {
    pub fn validate(&self, m: usize) -> Result<()> {
        let bad = |msg: &str| Err(VgaError::InvalidConfig(msg.to_string()));
        if !(self.outer_tol_elbo > 0.0 && self.mean_change_tol > 0.0 && self.pcg.tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_outer == 0 {
            return bad("max_outer must be positive");
        }
        if self.mode != SolverMode::Dense && self.rank.is_none() {
            return bad("a rank is required in the low-rank modes");
        }
        if self.mode == SolverMode::LowRankSparse && self.mask.is_none() {
            return bad("lowrank_sparse mode needs a sparsity mask");
        }
        if let Some(mask) = &self.mask {
            if mask.dim() != m {
                return Err(VgaError::DimensionMismatch {
                    context: "solver mask",
                    expected: m,
                    found: mask.dim(),
                });
            }
        }
        if let Some(x0) = &self.init_mean {
            if x0.len() != m {
                return Err(VgaError::DimensionMismatch {
                    context: "initial mean",
                    expected: m,
                    found: x0.len(),
                });
            }
        }
        Ok(())
    }
}

/// Per-iteration record of a solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub mode: String,
    pub rank: Option<usize>,
    /// `F` at the initial state and after every outer iteration.
    pub elbo_trace: Vec<f64>,
    /// `‖∂F/∂x̄‖` after every outer iteration.
    pub mean_residual_trace: Vec<f64>,
    /// `‖C⁻¹ - AᵗDA - C0⁻¹‖_F` after every outer iteration (absent for
    /// masked or very large problems).
    pub cov_residual_trace: Vec<Option<f64>>,
    /// `‖δx̄‖` of every Newton step.
    pub newton_step_norms: Vec<f64>,
    /// PCG iterations of every Newton step.
    pub pcg_iterations: Vec<usize>,
    pub backtracking_halvings: usize,
    /// `‖C_{k+1} - C_k‖_F` of every fixed-point step.
    pub cov_changes: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    /// The covariance iterates alternate between two limits.
    pub cov_oscillation: bool,
    pub saturated: bool,
    pub wall_time_seconds: Option<f64>,
}

/// Outcome of one Newton step on the mean.
#[derive(Debug, Clone)]
pub struct NewtonStep {
    pub mean: DVector<f64>,
    pub step_norm: f64,
    pub pcg_iterations: usize,
    pub halvings: usize,
    pub residual_before: f64,
    pub residual_after: f64,
}

/// `G(x̄) = Aᵗe^{Ax̄ + q/2} + C0⁻¹(x̄ - μ0) - Aᵗy` for fixed `q = diag(ACAᵗ)`.
fn newton_residual(
    x: &DVector<f64>,
    q: &DVector<f64>,
    problem: &PoissonProblem,
) -> (DVector<f64>, DVector<f64>) {
    let a = &*problem.operator;
    let d = a.apply(x) + q * 0.5;
    let (ed, _) = exp_clamped(&d);
    let g = a.apply_transpose(&(&ed - problem.data.values()))
        + problem.prior.apply_precision(&(x - problem.prior.mu0()));
    (g, ed)
}

/// One Newton step `∂G δx̄ = -G` with `∂G = AᵗDA + C0⁻¹`, solved by PCG
/// preconditioned with the prior precision. The step is halved while it
/// fails to reduce `‖G‖`.
pub fn newton_step_mean(
    state: &GaussianState,
    problem: &PoissonProblem,
    cfg: &VgaConfig,
) -> Result<NewtonStep> {
    let q = problem
        .operator
        .quad_diag(state.cov.as_matrix(), state.mask());
    newton_step_with_quad(&state.mean, &q, problem, cfg)
}

fn newton_step_with_quad(
    x: &DVector<f64>,
    q: &DVector<f64>,
    problem: &PoissonProblem,
    cfg: &VgaConfig,
) -> Result<NewtonStep> {
    let a = &*problem.operator;
    let prior = &problem.prior;
    let (g, ed) = newton_residual(x, q, problem);
    let gnorm = g.norm();
    let jac = |v: &DVector<f64>| {
        a.apply_transpose(&a.apply(v).component_mul(&ed)) + prior.apply_precision(v)
    };
    let precond = |r: &DVector<f64>| prior.apply_covariance(r);
    let outcome = pcg_solve(jac, &(-&g), precond, None, &cfg.pcg)?;
    let delta = outcome.solution;

    let mut t = 1.0;
    let mut halvings = 0;
    let (mut candidate, mut cand_norm);
    loop {
        candidate = x + &delta * t;
        cand_norm = newton_residual(&candidate, q, problem).0.norm();
        if cand_norm.is_finite() && cand_norm <= gnorm {
            break;
        }
        if halvings == cfg.max_halvings {
            // No reduction at all: keep the current point.
            candidate = x.clone();
            cand_norm = gnorm;
            t = 0.0;
            break;
        }
        t *= 0.5;
        halvings += 1;
    }
    Ok(NewtonStep {
        mean: candidate,
        step_norm: delta.norm() * t,
        pcg_iterations: outcome.iterations,
        halvings,
        residual_before: gnorm,
        residual_after: cand_norm,
    })
}

/// Newton iteration on the mean with the covariance frozen, until
/// `‖δx̄‖ ≤ tol` or `max_iter` steps. Returns the final mean and every step
/// norm.
pub fn newton_solve_mean(
    state: &GaussianState,
    problem: &PoissonProblem,
    cfg: &VgaConfig,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, Vec<f64>)> {
    let q = problem
        .operator
        .quad_diag(state.cov.as_matrix(), state.mask());
    let mut x = state.mean.clone();
    let mut norms = Vec::new();
    for _ in 0..max_iter {
        let step = newton_step_with_quad(&x, &q, problem, cfg)?;
        x = step.mean;
        norms.push(step.step_norm);
        if step.step_norm <= tol {
            break;
        }
    }
    Ok((x, norms))
}

/// One application of `T(C) = (C0⁻¹ + Aᵗ D(C) A)⁻¹` at the current mean.
///
/// A low-rank operator goes through the Woodbury form; any other operator
/// is inverted densely. With a mask on the state, only the pattern is kept.
pub fn fixed_point_step_cov(
    state: &GaussianState,
    problem: &PoissonProblem,
    cfg: &VgaConfig,
) -> Result<SpdMatrix> {
    fixed_point_step_cov_logdet(state, problem, cfg).map(|(c, _)| c)
}

/// [`fixed_point_step_cov`] together with `ln|C|` of the full update.
pub fn fixed_point_step_cov_logdet(
    state: &GaussianState,
    problem: &PoissonProblem,
    cfg: &VgaConfig,
) -> Result<(SpdMatrix, f64)> {
    let a = &*problem.operator;
    let d = a.apply(&state.mean) + a.quad_diag(state.cov.as_matrix(), state.mask()) * 0.5;
    let (ed, _) = exp_clamped(&d);
    match a {
        ForwardOperator::LowRank(factor) => {
            woodbury_cov_logdet(&problem.prior, factor, &ed, state.mask())
        }
        _ => {
            let h = SpdMatrix::from_symmetrized(
                &(problem.prior.precision_matrix() + a.weighted_gram(&ed)),
            );
            let chol = h.cholesky()?;
            let estimate = chol.condition_estimate();
            if estimate > cfg.condition_limit {
                return Err(VgaError::IllConditioned { estimate });
            }
            let c = chol.inverse();
            let c = match state.mask() {
                Some(mask) => SpdMatrix::from_symmetrized(&mask.select(&c)),
                None => SpdMatrix::from_symmetrized(&c),
            };
            Ok((c, -chol.logdet()))
        }
    }
}

/// The problem the solver actually works on: in the low-rank modes the
/// operator is replaced once by its randomized SVD.
pub fn prepare_problem(problem: &PoissonProblem, cfg: &VgaConfig) -> Result<PoissonProblem> {
    match cfg.mode {
        SolverMode::Dense => Ok(problem.clone()),
        SolverMode::LowRank | SolverMode::LowRankSparse => {
            if let ForwardOperator::LowRank(f) = &*problem.operator {
                if Some(f.rank()) == cfg.rank {
                    return Ok(problem.clone());
                }
            }
            let rank = cfg.rank.ok_or_else(|| {
                VgaError::InvalidConfig("a rank is required in the low-rank modes".into())
            })?;
            let factor = rsvd(&*problem.operator, rank, &cfg.rsvd)?;
            problem.with_operator(ForwardOperator::LowRank(factor))
        }
    }
}

/// The configured starting point.
pub fn initial_state(problem: &PoissonProblem, cfg: &VgaConfig) -> Result<GaussianState> {
    let m = problem.dim();
    let mean = cfg.init_mean.clone().unwrap_or_else(|| DVector::zeros(m));
    let cov = match cfg.init_cov {
        InitCov::Identity => SpdMatrix::identity(m),
        InitCov::Prior => problem.prior.covariance_matrix(),
    };
    let state = GaussianState::new(mean, cov)?;
    match &cfg.mask {
        Some(mask) => state.with_mask(Arc::clone(mask)),
        None => Ok(state),
    }
}

/// Runs the alternating scheme from the configured initial state.
///
/// Reaching `max_outer` is not an error: the state is returned with
/// `converged = false` in the report.
pub fn run_vga(problem: &PoissonProblem, cfg: &VgaConfig) -> Result<(GaussianState, SolverReport)> {
    cfg.validate(problem.dim())?;
    let working = prepare_problem(problem, cfg)?;
    let init = initial_state(&working, cfg)?;
    run_prepared(&working, cfg, init)
}

/// Runs the alternating scheme from `init` (warm start). The mask of `init`
/// takes precedence over the configured one.
pub fn run_vga_from(
    problem: &PoissonProblem,
    cfg: &VgaConfig,
    init: GaussianState,
) -> Result<(GaussianState, SolverReport)> {
    cfg.validate(problem.dim())?;
    let working = prepare_problem(problem, cfg)?;
    run_prepared(&working, cfg, init)
}

fn run_prepared(
    problem: &PoissonProblem,
    cfg: &VgaConfig,
    init: GaussianState,
) -> Result<(GaussianState, SolverReport)> {
    let started = Instant::now();
    let m = problem.dim();
    let mut state = init;
    let mut report = SolverReport {
        mode: cfg.mode.to_string(),
        rank: cfg.rank.filter(|_| cfg.mode != SolverMode::Dense),
        ..Default::default()
    };
    let first = elbo(&state, problem)?;
    report.saturated |= first.saturated;
    report.elbo_trace.push(first.total);
    let mut previous_elbo = first.total;
    let mut history: Vec<DMatrix<f64>> = Vec::new();

    for _ in 0..cfg.max_outer {
        report.outer_iterations += 1;
        let mean_before = state.mean.clone();
        let q = problem
            .operator
            .quad_diag(state.cov.as_matrix(), state.mask());
        for _ in 0..cfg.newton_steps_per_outer {
            let step = newton_step_with_quad(&state.mean, &q, problem, cfg)?;
            report.newton_step_norms.push(step.step_norm);
            report.pcg_iterations.push(step.pcg_iterations);
            report.backtracking_halvings += step.halvings;
            state.mean = step.mean;
        }
        for _ in 0..cfg.fixedpoint_steps_per_outer {
            let (next, logdet) = fixed_point_step_cov_logdet(&state, problem, cfg)?;
            report
                .cov_changes
                .push((next.as_matrix() - state.cov.as_matrix()).norm());
            history.push(state.cov.as_matrix().clone());
            if history.len() > 2 {
                history.remove(0);
            }
            state.set_cov(next, state.mask.as_ref().map(|_| logdet));
        }

        let f = elbo(&state, problem)?;
        report.saturated |= f.saturated;
        report.elbo_trace.push(f.total);
        let (mean_res, cov_res) = residuals(&state, problem, m)?;
        report.mean_residual_trace.push(mean_res);
        report.cov_residual_trace.push(cov_res);

        let done = match cfg.stop {
            StopCriterion::ElboChange => (f.total - previous_elbo).abs() < cfg.outer_tol_elbo,
            StopCriterion::MeanChange => {
                let scale = state.mean.norm().max(f64::MIN_POSITIVE);
                (&state.mean - &mean_before).norm() / scale < cfg.mean_change_tol
            }
        };
        previous_elbo = f.total;
        if done {
            report.converged = true;
            break;
        }
    }

    if !report.converged && history.len() == 2 {
        let last = report.cov_changes.last().copied().unwrap_or(0.0);
        let two_back = (state.cov.as_matrix() - &history[0]).norm();
        report.cov_oscillation = last > 1e-8 && two_back < 0.1 * last;
    }
    report.wall_time_seconds = Some(started.elapsed().as_secs_f64());
    Ok((state, report))
}

fn residuals(
    state: &GaussianState,
    problem: &PoissonProblem,
    m: usize,
) -> Result<(f64, Option<f64>)> {
    if state.mask.is_none() && m <= DENSE_RESIDUAL_MAX_DIM {
        let (a, b) = optimality_residual(state, problem)?;
        Ok((a, Some(b)))
    } else {
        Ok((crate::elbo::grad_mean(state, problem)?.norm(), None))
    }
}

/// Suggested execution path for a problem of the given size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModeSuggestion {
    pub mode: SolverMode,
    pub rank: Option<usize>,
}

/// Dense when `m ≤ 1000` and a dense `m × m` covariance fits the budget;
/// otherwise low rank, and additionally sparse when even one dense
/// covariance does not fit. The rank comes from the singular values, when
/// given, with relative cutoff [`DEFAULT_RANK_THRESHOLD`].
pub fn select_mode(
    m: usize,
    n: usize,
    memory_budget_bytes: u64,
    singular_values: Option<&[f64]>,
) -> ModeSuggestion {
    let dense_bytes = 8u64.saturating_mul(m as u64).saturating_mul(m as u64);
    let rank =
        singular_values.map(|s| suggest_rank(s, DEFAULT_RANK_THRESHOLD).clamp(1, m.min(n).max(1)));
    if m <= 1000 && dense_bytes <= memory_budget_bytes {
        return ModeSuggestion {
            mode: SolverMode::Dense,
            rank: None,
        };
    }
    let mode = if dense_bytes <= memory_budget_bytes {
        SolverMode::LowRank
    } else {
        SolverMode::LowRankSparse
    };
    ModeSuggestion { mode, rank }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_prior, PoissonData, PriorKind};
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn scalar(y: u64) -> PoissonProblem {
        PoissonProblem::new(
            Arc::new(ForwardOperator::Dense(dmatrix![1.0])),
            Arc::new(PoissonData::new(vec![y])),
            make_prior(PriorKind::L2, 1.0, 1, None).unwrap(),
        )
        .unwrap()
    }

    fn unit(m: usize) -> GaussianState {
        GaussianState::new(DVector::zeros(m), SpdMatrix::identity(m)).unwrap()
    }

    #[test]
    fn scalar_newton_step() {
        let p = scalar(1);
        let cfg = VgaConfig {
            pcg: PcgOptions {
                tol: 1e-14,
                max_iter: 10,
                ..Default::default()
            },
            ..Default::default()
        };
        let step = newton_step_mean(&unit(1), &p, &cfg).unwrap();
        let e = 0.5_f64.exp();
        assert_relative_eq!(step.mean[0], -(e - 1.0) / (e + 1.0), epsilon = 1e-14);
        assert_relative_eq!(step.mean[0], -0.2449186624037092, epsilon = 1e-12);

        // Iterated to convergence the mean is the root of e^{x + 1/2} + x - 1,
        // found here by bisection.
        let (x, _) = newton_solve_mean(&unit(1), &p, &cfg, 1e-14, 50).unwrap();
        let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (mid + 0.5).exp() + mid - 1.0 > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert_relative_eq!(x[0], 0.5 * (lo + hi), epsilon = 1e-12);
    }

    #[test]
    fn newton_step_at_root_is_zero() {
        let p = scalar(1);
        let cfg = VgaConfig {
            pcg: PcgOptions {
                tol: 1e-14,
                max_iter: 10,
                ..Default::default()
            },
            ..Default::default()
        };
        let (x, _) = newton_solve_mean(&unit(1), &p, &cfg, 0.0, 30).unwrap();
        let s = GaussianState::new(x, SpdMatrix::identity(1)).unwrap();
        assert!(newton_step_mean(&s, &p, &cfg).unwrap().step_norm < 1e-15);
    }

    #[test]
    fn scalar_fixed_point_step() {
        let c = fixed_point_step_cov(&unit(1), &scalar(0), &VgaConfig::default()).unwrap();
        assert_relative_eq!(
            c.as_matrix()[(0, 0)],
            1.0 / (1.0 + 0.5_f64.exp()),
            epsilon = 1e-15
        );
        assert_relative_eq!(c.as_matrix()[(0, 0)], 0.3775406687981454, epsilon = 1e-15);
    }

    #[test]
    fn zero_operator_returns_prior() {
        let prior = make_prior(
            PriorKind::H1,
            2.0,
            4,
            Some(DVector::from_vec(vec![1.0, -1.0, 0.5, 2.0])),
        )
        .unwrap();
        let p = PoissonProblem::new(
            Arc::new(ForwardOperator::Dense(DMatrix::zeros(3, 4))),
            Arc::new(PoissonData::new(vec![0, 2, 1])),
            prior.clone(),
        )
        .unwrap();
        let cfg = VgaConfig {
            pcg: PcgOptions {
                tol: 1e-12,
                max_iter: 10,
                ..Default::default()
            },
            ..Default::default()
        };
        let step = newton_step_mean(&unit(4), &p, &cfg).unwrap();
        assert!((step.mean - prior.mu0()).amax() < 1e-12);
        let c = fixed_point_step_cov(&unit(4), &p, &cfg).unwrap();
        assert!((c.as_matrix() - prior.covariance_matrix().as_matrix()).amax() < 1e-12);

        let (state, report) = run_vga(&p, &cfg).unwrap();
        assert!((state.mean - prior.mu0()).amax() < 1e-10);
        assert!((state.cov.as_matrix() - prior.covariance_matrix().as_matrix()).amax() < 1e-12);
        assert!(report.converged);
        assert!(report.outer_iterations <= 2);
    }

    #[test]
    fn dense_and_full_rank_paths_agree() {
        let a = DMatrix::from_fn(7, 6, |i, j| 0.3 * ((i * 7 + j * 3) as f64 * 0.41).sin());
        let p = PoissonProblem::new(
            Arc::new(ForwardOperator::Dense(a)),
            Arc::new(PoissonData::new(vec![1, 0, 3, 2, 5, 1, 0])),
            make_prior(PriorKind::L2, 2.0, 6, None).unwrap(),
        )
        .unwrap();
        let cfg = VgaConfig::default();
        let dense = fixed_point_step_cov(&unit(6), &p, &cfg).unwrap();
        let low_cfg = VgaConfig {
            mode: SolverMode::LowRank,
            rank: Some(6),
            ..Default::default()
        };
        let low = fixed_point_step_cov(&unit(6), &prepare_problem(&p, &low_cfg).unwrap(), &low_cfg)
            .unwrap();
        assert!((dense.as_matrix() - low.as_matrix()).norm() <= 1e-8 * dense.as_matrix().norm());
    }

    #[test]
    fn mode_selection() {
        assert_eq!(select_mode(100, 100, 1 << 30, None).mode, SolverMode::Dense);
        assert_eq!(
            select_mode(16384, 16384, 1 << 30, None).mode,
            SolverMode::LowRankSparse
        );
        assert_ne!(select_mode(100, 100, 1000, None).mode, SolverMode::Dense);
        let s = [10.0, 1.0, 1e-3, 1e-9];
        assert_eq!(select_mode(2000, 2000, 1 << 40, Some(&s)).rank, Some(3));
    }

    #[test]
    fn config_validation() {
        let cfg = VgaConfig {
            mode: SolverMode::LowRank,
            ..Default::default()
        };
        assert!(cfg.validate(3).is_err());
        let cfg = VgaConfig {
            mode: SolverMode::LowRankSparse,
            rank: Some(2),
            ..Default::default()
        };
        assert!(cfg.validate(3).is_err());
    }
}
