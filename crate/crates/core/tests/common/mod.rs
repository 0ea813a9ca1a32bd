#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use poisson_vga::elbo::GaussianState;
use poisson_vga::linalg::SpdMatrix;
use poisson_vga::model::{
    make_prior, make_test_problem, sample_poisson_data, ForwardOperator, PoissonProblem, PriorKind,
    ProblemName, ProblemParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn orthogonal(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, m, m).qr().q()
}

/// SPD matrix with eigenvalues log-uniform in `[1, cond]`.
pub fn spd_with_condition(rng: &mut ChaCha8Rng, m: usize, cond: f64) -> DMatrix<f64> {
    let q = orthogonal(rng, m);
    let eig = DVector::from_fn(m, |_, _| cond.powf(rng.random::<f64>()));
    let c = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    (&c + c.transpose()) * 0.5
}

/// Well-conditioned SPD matrix `BBᵗ/m + shift·I`.
pub fn random_spd(rng: &mut ChaCha8Rng, m: usize, shift: f64) -> SpdMatrix {
    let b = gaussian_matrix(rng, m, m);
    SpdMatrix::from_symmetrized(&(&b * b.transpose() / m as f64 + DMatrix::identity(m, m) * shift))
}

/// Poisson problem with a Gaussian `n × m` operator scaled so the rates stay
/// moderate, counts drawn from a Gaussian true solution.
pub fn random_problem(
    seed: u64,
    m: usize,
    n: usize,
    kind: PriorKind,
    alpha: f64,
) -> PoissonProblem {
    let mut r = rng(seed);
    let a = gaussian_matrix(&mut r, n, m) / (m as f64).sqrt();
    let x = gaussian_vector(&mut r, m) * 0.7 + DVector::from_element(m, 0.3);
    let op = ForwardOperator::Dense(a);
    let y = sample_poisson_data(&op, &x, seed.wrapping_add(1)).unwrap();
    PoissonProblem::new(
        Arc::new(op),
        Arc::new(y),
        make_prior(kind, alpha, m, None).unwrap(),
    )
    .unwrap()
}

/// Random valid state around the origin.
pub fn random_state(rng: &mut ChaCha8Rng, m: usize) -> GaussianState {
    let mean = gaussian_vector(rng, m) * 0.5;
    let cov = random_spd(rng, m, 0.2).scaled(0.5);
    GaussianState::new(mean, cov).unwrap()
}

/// `phillips`, `n = m = 100`, counts with the given seed.
pub fn phillips(kind: PriorKind, alpha: f64, seed: u64) -> PoissonProblem {
    let tp = make_test_problem(ProblemName::Phillips, 100, &ProblemParams::default()).unwrap();
    let y = sample_poisson_data(&tp.operator, &tp.x_true, seed).unwrap();
    PoissonProblem::new(
        Arc::new(tp.operator),
        Arc::new(y),
        make_prior(kind, alpha, 100, None).unwrap(),
    )
    .unwrap()
}

/// Bisection root of a continuous function with a sign change on `[lo, hi]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "no sign change on [{lo}, {hi}]");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
