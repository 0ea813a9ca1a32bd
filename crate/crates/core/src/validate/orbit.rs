use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::elbo::GaussianState;
use crate::error::Result;
use crate::linalg::{loewner_le, symmetric_spectral_norm};
use crate::model::PoissonProblem;
use crate::vga::{fixed_point_step_cov, VgaConfig};

/// Loewner-order diagnostics of the covariance iterates `Cᵏ⁺¹ = T(Cᵏ)`
/// started from `C⁰ = C0` with the mean frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitDiagnostics {
    /// `C⁰ ⪰ C² ⪰ C⁴ ⪰ …`.
    pub even_decreasing: bool,
    /// `C¹ ⪯ C³ ⪯ C⁵ ⪯ …`.
    pub odd_increasing: bool,
    /// Last odd iterate `⪯` last even iterate (`C** ⪯ C*`).
    pub limits_ordered: bool,
    /// `‖C* - C**‖₂`.
    pub gap: f64,
    pub iterations: usize,
    /// Smallest eigenvalue margin seen in any ordering check (negative
    /// means a violation beyond rounding).
    pub worst_margin: f64,
}

/// Runs `k_max` fixed-point steps on dense covariances and checks the
/// two-subsequence structure with eigenvalue slack `slack`.
pub fn orbit_check(
    problem: &PoissonProblem,
    mean: &DVector<f64>,
    k_max: usize,
    slack: f64,
) -> Result<OrbitDiagnostics> {
    let cfg = VgaConfig::default();
    let mut state = GaussianState::new(mean.clone(), problem.prior.covariance_matrix())?;
    let mut iterates: Vec<DMatrix<f64>> = vec![state.cov.as_matrix().clone()];
    for _ in 0..k_max {
        state.cov = fixed_point_step_cov(&state, problem, &cfg)?;
        iterates.push(state.cov.as_matrix().clone());
    }

    let mut worst = f64::INFINITY;
    let mut check = |lower: &DMatrix<f64>, upper: &DMatrix<f64>| {
        let margin = crate::linalg::min_eigenvalue(&(upper - lower));
        worst = worst.min(margin);
        loewner_le(lower, upper, slack)
    };
    let mut even_decreasing = true;
    let mut odd_increasing = true;
    for k in 2..iterates.len() {
        let ok = check_pair(&iterates, k, &mut check);
        if k % 2 == 0 {
            even_decreasing &= ok;
        } else {
            odd_increasing &= ok;
        }
    }
    let last = iterates.len() - 1;
    let (c_star, c_star2) = if last.is_multiple_of(2) {
        (&iterates[last], &iterates[last.saturating_sub(1)])
    } else {
        (&iterates[last - 1], &iterates[last])
    };
    let limits_ordered = if last == 0 {
        true
    } else {
        check(c_star2, c_star)
    };
    Ok(OrbitDiagnostics {
        even_decreasing,
        odd_increasing,
        limits_ordered,
        gap: symmetric_spectral_norm(&(c_star - c_star2)),
        iterations: k_max,
        worst_margin: if worst.is_finite() { worst } else { 0.0 },
    })
}

/// Even `k`: `Cᵏ ⪯ Cᵏ⁻²`. Odd `k`: `Cᵏ⁻² ⪯ Cᵏ`.
fn check_pair(
    iterates: &[DMatrix<f64>],
    k: usize,
    check: &mut impl FnMut(&DMatrix<f64>, &DMatrix<f64>) -> bool,
) -> bool {
    if k.is_multiple_of(2) {
        check(&iterates[k], &iterates[k - 2])
    } else {
        check(&iterates[k - 2], &iterates[k])
    }
}
