use nalgebra::{DMatrix, DVector};

use crate::elbo::{exp_clamped, GaussianState};
use crate::error::{Result, VgaError};
use crate::linalg::{LinearOperator, SpdMatrix};
use crate::model::PoissonProblem;

/// `H(x) = Aᵗ diag(e^{Ax}) A + C0⁻¹`, the Hessian of `g = -ln p(x | y)`.
pub fn laplace_hessian(problem: &PoissonProblem, x: &DVector<f64>) -> DMatrix<f64> {
    let (e, _) = exp_clamped(&problem.operator.apply(x));
    problem.operator.weighted_gram(&e) + problem.prior.precision_matrix()
}

fn neg_log_posterior(problem: &PoissonProblem, x: &DVector<f64>) -> f64 {
    let ax = problem.operator.apply(x);
    ax.iter().map(|v| v.exp()).sum::<f64>() - ax.dot(problem.data.values())
        + 0.5 * problem.prior.quad_form(x)
}

/// Maximum a posteriori point by Newton's method on `g(x) = -ln p(x | y)`
/// with an Armijo backtracking line search, started at the prior mean. The
/// line search is skipped once the predicted decrease is below the rounding
/// level of `g`.
///
/// Returns once `‖∇g‖ ≤ tol`, or once `‖∇g‖` is at the rounding level of
/// its own terms.
pub fn map_estimate(problem: &PoissonProblem, tol: f64, max_iter: usize) -> Result<DVector<f64>> {
    let a = &*problem.operator;
    let prior = &problem.prior;
    let y = problem.data.values();
    let mut x = prior.mu0().clone();
    for _ in 0..=max_iter {
        let (e, _) = exp_clamped(&a.apply(&x));
        let data_term = a.apply_transpose(&(&e - y));
        let prior_term = prior.apply_precision(&(&x - prior.mu0()));
        let grad = &data_term + &prior_term;
        let floor = 1e-14
            * (a.apply_transpose(&e).norm() + a.apply_transpose(y).norm() + prior_term.norm());
        let gnorm = grad.norm();
        if gnorm <= tol.max(floor) {
            return Ok(x);
        }
        let h = SpdMatrix::from_symmetrized(&(a.weighted_gram(&e) + prior.precision_matrix()));
        let delta = -h.cholesky()?.solve(&grad);
        let slope = grad.dot(&delta);
        let g0 = neg_log_posterior(problem, &x);
        let mut t = 1.0;
        // Below the rounding level of g the Armijo test carries no
        // information; take the full step.
        let informative = -slope > 1e-12 * g0.abs().max(1.0);
        for _ in 0..if informative { 60 } else { 0 } {
            let trial = &x + &delta * t;
            if neg_log_posterior(problem, &trial) <= g0 + 1e-4 * t * slope {
                break;
            }
            t *= 0.5;
        }
        x += &delta * t;
    }
    Err(VgaError::MaxIterationsExceeded {
        iterations: max_iter,
    })
}

/// `N(x̂, H(x̂)⁻¹)`.
pub fn laplace_approximation(problem: &PoissonProblem) -> Result<GaussianState> {
    let x_hat = map_estimate(problem, 1e-10, 100)?;
    let h = SpdMatrix::from_symmetrized(&laplace_hessian(problem, &x_hat));
    GaussianState::new(x_hat, h.inverse()?)
}
