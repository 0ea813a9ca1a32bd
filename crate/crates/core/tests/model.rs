mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use poisson_vga::linalg::{LinearOperator, LowRankFactor};
use poisson_vga::model::{
    log_joint, log_likelihood, log_prior, make_prior, make_test_problem, sample_poisson_data,
    ForwardOperator, PoissonData, PriorKind, ProblemName, ProblemParams, Toeplitz,
};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

/// Operator with `n` identical rows whose rate at `x = [1]` is `λ`.
fn constant_rate_operator(n: usize, lambda: f64) -> (ForwardOperator, DVector<f64>) {
    let u = DMatrix::from_element(n, 1, 1.0 / (n as f64).sqrt());
    let s = DVector::from_element(1, (n as f64).sqrt() * lambda.ln().abs());
    let v = DMatrix::from_element(1, 1, 1.0);
    let sign = if lambda >= 1.0 { 1.0 } else { -1.0 };
    (
        ForwardOperator::LowRank(LowRankFactor::new(u, s, v).unwrap()),
        DVector::from_element(1, sign),
    )
}

fn poisson_ln_pmf(k: u64, lambda: f64) -> f64 {
    k as f64 * lambda.ln() - lambda - ln_gamma(k as f64 + 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn toeplitz_agrees_with_dense(seed in any::<u64>(), n in 1usize..20) {
        let mut r = rng(seed);
        let mut row = gaussian_vector(&mut r, n);
        let col = gaussian_vector(&mut r, n);
        row[0] = col[0];
        let op = ForwardOperator::Toeplitz(Toeplitz::new(col, row).unwrap());
        let dense = op.to_dense();
        let x = gaussian_vector(&mut r, n);
        prop_assert!((op.apply(&x) - &dense * &x).amax() <= 1e-10);
        prop_assert!((op.apply_transpose(&x) - dense.transpose() * &x).amax() <= 1e-10);
        for i in 0..n {
            prop_assert!((op.row_dot(i, &x) - dense.row(i).transpose().dot(&x)).abs() <= 1e-10);
        }
    }

    #[test]
    fn joint_is_likelihood_plus_prior(seed in any::<u64>(), m in 1usize..8, n in 1usize..8) {
        let p = random_problem(seed, m, n, PriorKind::H1, 1.3);
        let mut r = rng(seed);
        let x = gaussian_vector(&mut r, m);
        let lj = log_joint(&x, &p.operator, &p.data, &p.prior).unwrap();
        prop_assert_eq!(lj, log_likelihood(&x, &p.operator, &p.data).unwrap() + log_prior(&x, &p.prior).unwrap());
        let shift = gaussian_vector(&mut r, m);
        let moved = make_prior(PriorKind::H1, 1.3, m, Some(&shift * 1.0)).unwrap();
        let base = log_prior(&x, &p.prior).unwrap();
        prop_assert!((log_prior(&(&x + &shift), &moved).unwrap() - base).abs() <= 1e-10 * base.abs().max(1.0));
    }
}

#[test]
fn poisson_draws_pass_chi_square() {
    for (lambda, seed) in [(0.5, 1u64), (4.0, 2), (20.0, 3)] {
        let n = 100_000;
        let (op, x) = constant_rate_operator(n, lambda);
        let y = sample_poisson_data(&op, &x, seed).unwrap();
        // Bins with expected count at least 5; the last bin collects the tail.
        let mut edges = Vec::new();
        let mut k = 0u64;
        let mut cdf = 0.0;
        while (1.0 - cdf) * n as f64 > 5.0 {
            let p = poisson_ln_pmf(k, lambda).exp();
            if p * n as f64 >= 5.0 {
                edges.push(k);
            }
            cdf += p;
            k += 1;
        }
        let last = *edges.last().unwrap();
        let mut observed = vec![0f64; edges.len()];
        for &c in y.counts() {
            let bin = if c >= last {
                edges.len() - 1
            } else {
                edges.iter().position(|&e| e >= c).unwrap()
            };
            observed[bin] += 1.0;
        }
        let mut expected = vec![0f64; edges.len()];
        let mut lo = 0u64;
        for (b, &e) in edges.iter().enumerate() {
            let p: f64 = if b == edges.len() - 1 {
                1.0 - (0..lo)
                    .map(|j| poisson_ln_pmf(j, lambda).exp())
                    .sum::<f64>()
            } else {
                (lo..=e).map(|j| poisson_ln_pmf(j, lambda).exp()).sum()
            };
            expected[b] = p * n as f64;
            lo = e + 1;
        }
        let stat: f64 = observed
            .iter()
            .zip(&expected)
            .map(|(o, e)| (o - e).powi(2) / e)
            .sum();
        let critical = ChiSquared::new((edges.len() - 1) as f64)
            .unwrap()
            .inverse_cdf(1.0 - 1e-3);
        assert!(stat < critical, "λ = {lambda}: χ² = {stat} ≥ {critical}");
    }
}

#[test]
fn sample_mean_follows_rate() {
    let (op, x) = constant_rate_operator(10_000, 4.0);
    let mut total = 0.0;
    for seed in 0..4 {
        let y = sample_poisson_data(&op, &x, seed).unwrap();
        total += y.counts().iter().sum::<u64>() as f64 / 10_000.0;
    }
    let mean = total / 4.0;
    assert!((3.9..=4.1).contains(&mean), "{mean}");
}

#[test]
fn likelihood_peaks_at_floor_of_rate() {
    let a = ForwardOperator::Dense(DMatrix::from_element(1, 1, 1.0));
    for lambda in [5.3, 9.9, 17.2, 40.0] {
        let x = DVector::from_element(1, f64::ln(lambda));
        let mode = lambda.floor() as u64;
        let at = |k: u64| log_likelihood(&x, &a, &PoissonData::new(vec![k])).unwrap();
        assert!((at(mode) - poisson_ln_pmf(mode, lambda)).abs() <= 1e-12);
        assert!(at(mode) >= at(mode + 1) && at(mode) >= at(mode - 1));
    }
}

#[test]
fn every_problem_is_representation_consistent() {
    for name in [
        ProblemName::Phillips,
        ProblemName::Gravity,
        ProblemName::Heat,
        ProblemName::Foxgood,
        ProblemName::Blur2d,
    ] {
        let size = if name == ProblemName::Blur2d { 12 } else { 60 };
        let tp = make_test_problem(name, size, &ProblemParams::default()).unwrap();
        let dense = tp.operator.to_dense();
        let x = DVector::from_fn(dense.ncols(), |i, _| (i as f64 * 0.37).cos());
        assert!(
            (tp.operator.apply(&x) - &dense * &x).amax() <= 1e-10,
            "{name}"
        );
        assert!(
            (tp.operator.apply_transpose(&x) - dense.transpose() * &x).amax() <= 1e-10,
            "{name}"
        );
    }
}
