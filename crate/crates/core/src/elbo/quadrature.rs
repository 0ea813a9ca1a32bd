use nalgebra::DVector;

use crate::error::{Result, VgaError};
use crate::linalg::SpdMatrix;
use crate::model::PoissonProblem;
use crate::validate::{laplace_hessian, map_estimate};

/// Largest dimension accepted by [`evidence_quadrature`].
pub const MAX_QUADRATURE_DIM: usize = 3;

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    /// Stop refining once successive estimates of `ln Z` differ by less.
    pub tol: f64,
    pub initial_step: f64,
    pub initial_half_width: f64,
    pub max_halvings: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            initial_step: 0.5,
            initial_half_width: 6.0,
            max_halvings: 6,
        }
    }
}

/// `ln Z = ln ∫ p(x, y) dx` by tensor trapezoidal quadrature.
///
/// The integrand is whitened around the MAP point with the Laplace Hessian
/// `H = LLᵗ`, i.e. `x = x̂ + L⁻ᵗz`. The box is widened until the integrand
/// on its boundary is negligible (`e^{-40}` below the peak), then the step
/// is halved until the estimate settles.
pub fn evidence_quadrature(problem: &PoissonProblem, opts: &QuadratureOptions) -> Result<f64> {
    let m = problem.dim();
    if m > MAX_QUADRATURE_DIM {
        return Err(VgaError::DimensionTooLarge {
            dim: m,
            max: MAX_QUADRATURE_DIM,
        });
    }
    let x_hat = map_estimate(problem, 1e-10, 100)?;
    let h_chol = SpdMatrix::from_symmetrized(&laplace_hessian(problem, &x_hat)).cholesky()?;
    // Columns of L⁻ᵗ map whitened coordinates to x.
    let map = h_chol.lower_inverse().transpose();

    let a = problem.operator.to_dense();
    let y = problem.data.values().clone();
    let ln_fact = problem.data.log_factorial_sum();
    let prior = &problem.prior;
    let prior_const =
        -0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * prior.logdet_covariance();
    let log_joint = |z: &DVector<f64>| -> f64 {
        let x = &x_hat + &map * z;
        let ax = &a * &x;
        let mut ll = -ln_fact;
        for (eta, yi) in ax.iter().zip(y.iter()) {
            ll += eta * yi - eta.exp();
        }
        ll - 0.5 * prior.quad_form(&x) + prior_const
    };
    let peak = log_joint(&DVector::zeros(m));
    let jacobian = -0.5 * h_chol.logdet();

    let mut half_width = opts.initial_half_width;
    loop {
        let boundary = boundary_max(m, half_width, opts.initial_step, &log_joint);
        if boundary < peak - 40.0 || half_width > 64.0 {
            break;
        }
        half_width += 2.0;
    }

    let mut step = opts.initial_step;
    let mut previous = tensor_trapezoid(m, half_width, step, &log_joint) + jacobian;
    for _ in 0..opts.max_halvings {
        step /= 2.0;
        let current = tensor_trapezoid(m, half_width, step, &log_joint) + jacobian;
        if (current - previous).abs() < opts.tol {
            return Ok(current);
        }
        previous = current;
    }
    Ok(previous)
}

/// Laplace approximation of the log evidence,
/// `ln p(x̂, y) + (m/2) ln 2π - ½ ln|H|`.
pub fn laplace_log_evidence(problem: &PoissonProblem) -> Result<f64> {
    let x_hat = map_estimate(problem, 1e-10, 100)?;
    let h = SpdMatrix::from_symmetrized(&laplace_hessian(problem, &x_hat));
    let m = problem.dim() as f64;
    Ok(
        problem.log_joint(&x_hat)? + 0.5 * m * (2.0 * std::f64::consts::PI).ln()
            - 0.5 * h.logdet()?,
    )
}

fn grid_points(half_width: f64, step: f64) -> Vec<f64> {
    let k = (half_width / step).ceil() as i64;
    (-k..=k).map(|i| i as f64 * step).collect()
}

/// Visits every node of the tensor grid.
fn for_each_node(m: usize, pts: &[f64], mut f: impl FnMut(&DVector<f64>, bool)) {
    let len = pts.len();
    let mut idx = vec![0usize; m];
    let mut z = DVector::from_element(m, pts[0]);
    loop {
        let on_boundary = idx.iter().any(|&i| i == 0 || i == len - 1);
        f(&z, on_boundary);
        let mut d = 0;
        loop {
            if d == m {
                return;
            }
            idx[d] += 1;
            if idx[d] < len {
                z[d] = pts[idx[d]];
                break;
            }
            idx[d] = 0;
            z[d] = pts[0];
            d += 1;
        }
    }
}

fn tensor_trapezoid(
    m: usize,
    half_width: f64,
    step: f64,
    log_f: &impl Fn(&DVector<f64>) -> f64,
) -> f64 {
    let pts = grid_points(half_width, step);
    let mut values = Vec::with_capacity(pts.len().pow(m as u32));
    for_each_node(m, &pts, |z, _| values.push(log_f(z)));
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // Boundary nodes carry half weights, but they are negligible by
    // construction of the box; the plain sum is the trapezoid rule here.
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln() + m as f64 * step.ln()
}

fn boundary_max(
    m: usize,
    half_width: f64,
    step: f64,
    log_f: &impl Fn(&DVector<f64>) -> f64,
) -> f64 {
    let pts = grid_points(half_width, step);
    let mut best = f64::NEG_INFINITY;
    for_each_node(m, &pts, |z, on_boundary| {
        if on_boundary {
            best = best.max(log_f(z));
        }
    });
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_prior, ForwardOperator, PoissonData, PriorKind};
    use nalgebra::DMatrix;
    use std::sync::Arc;

    #[test]
    fn zero_operator_gives_constant_likelihood() {
        let p = PoissonProblem::new(
            Arc::new(ForwardOperator::Dense(DMatrix::zeros(3, 2))),
            Arc::new(PoissonData::new(vec![0, 0, 0])),
            make_prior(PriorKind::L2, 2.0, 2, None).unwrap(),
        )
        .unwrap();
        let ln_z = evidence_quadrature(&p, &QuadratureOptions::default()).unwrap();
        assert!((ln_z + 3.0).abs() < 1e-9, "{ln_z}");
    }

    #[test]
    fn scalar_evidence_matches_one_dimensional_sum() {
        // Brute-force Riemann sum over a wide interval as an independent oracle.
        let p = PoissonProblem::new(
            Arc::new(ForwardOperator::Dense(DMatrix::from_element(2, 1, 0.8))),
            Arc::new(PoissonData::new(vec![3, 1])),
            make_prior(PriorKind::L2, 0.5, 1, None).unwrap(),
        )
        .unwrap();
        let h = 1e-4;
        let vals: Vec<f64> = (-200_000..200_000)
            .map(|k| {
                p.log_joint(&DVector::from_element(1, k as f64 * h))
                    .unwrap()
            })
            .collect();
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let oracle = max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + h.ln();
        let ln_z = evidence_quadrature(&p, &QuadratureOptions::default()).unwrap();
        assert!((ln_z - oracle).abs() < 1e-8, "{ln_z} vs {oracle}");
    }

    #[test]
    fn refuses_large_dimensions() {
        let p = PoissonProblem::new(
            Arc::new(ForwardOperator::Dense(DMatrix::zeros(1, 4))),
            Arc::new(PoissonData::new(vec![0])),
            make_prior(PriorKind::L2, 1.0, 4, None).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            evidence_quadrature(&p, &QuadratureOptions::default()),
            Err(VgaError::DimensionTooLarge { .. })
        ));
    }
}
