mod common;

use std::sync::Arc;

use common::*;
use nalgebra::{dmatrix, DMatrix, DVector};
use poisson_vga::elbo::GaussianState;
use poisson_vga::linalg::{loewner_le, SpdMatrix};
use poisson_vga::model::{make_prior, ForwardOperator, PoissonData, PoissonProblem, PriorKind};
use poisson_vga::validate::{
    compare_gaussians, hpd_intervals_gaussian, hpd_intervals_samples, laplace_approximation,
    mh_independence_sampler, McmcConfig,
};
use poisson_vga::vga::{run_vga, VgaConfig};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn scalar_problem(a: Vec<f64>, y: Vec<u64>, alpha: f64) -> PoissonProblem {
    let n = a.len();
    PoissonProblem::new(
        Arc::new(ForwardOperator::Dense(DMatrix::from_vec(n, 1, a))),
        Arc::new(PoissonData::new(y)),
        make_prior(PriorKind::L2, alpha, 1, None).unwrap(),
    )
    .unwrap()
}

/// Posterior mean and variance of a one-unknown problem by trapezoidal
/// quadrature of the unnormalised density.
fn quadrature_moments(p: &PoissonProblem) -> (f64, f64) {
    let a = p.operator.to_dense();
    let y = p.data.values();
    let log_post = |x: f64| {
        let mut s = -0.5 * p.prior.quad_form(&DVector::from_element(1, x));
        for i in 0..a.nrows() {
            let eta = a[(i, 0)] * x;
            s += y[i] * eta - eta.exp();
        }
        s
    };
    let (lo, hi, n) = (-8.0, 8.0, 200_001);
    let h = (hi - lo) / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|k| lo + k as f64 * h).collect();
    let peak = xs
        .iter()
        .map(|&x| log_post(x))
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = xs.iter().map(|&x| (log_post(x) - peak).exp()).collect();
    let z: f64 = w.iter().sum();
    let mean = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / z;
    let var = xs
        .iter()
        .zip(&w)
        .map(|(x, w)| (x - mean).powi(2) * w)
        .sum::<f64>()
        / z;
    (mean, var)
}

#[test]
fn sampler_matches_quadrature_in_one_dimension() {
    let p = scalar_problem(vec![1.0, 0.6, -0.4], vec![3, 0, 1], 0.5);
    let (q, _) = run_vga(&p, &VgaConfig::default()).unwrap();
    let cfg = McmcConfig {
        chain_length: 60_000,
        burn_in: 10_000,
        seed: 3,
        ..Default::default()
    };
    let chain = mh_independence_sampler(&p, &q, &cfg).unwrap();
    let (mean, var) = quadrature_moments(&p);
    let se = chain.mean_standard_error[0];
    assert!(se > 0.0);
    assert!(
        (chain.mean[0] - mean).abs() <= 3.0 * se,
        "{} vs {mean} (se {se})",
        chain.mean[0]
    );
    assert!((chain.covariance[(0, 0)] - var).abs() <= 0.05 * var);
    assert!(chain.acceptance_rate > 0.5);
}

#[test]
fn sample_intervals_approach_gaussian_width() {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut r = rng(11);
    let (mu, sd) = (1.5, 0.8);
    let n = 20_000;
    let samples = DMatrix::from_fn(n, 1, |_, _| mu + sd * r.sample::<f64, _>(StandardNormal));
    for gamma in [0.5, 0.9, 0.95] {
        let sample = hpd_intervals_samples(&samples, gamma).unwrap()[0];
        let exact = 2.0 * sd * Normal::standard().inverse_cdf(0.5 * (1.0 + gamma));
        assert!(
            (sample.width() - exact).abs() <= 0.05 * exact,
            "{gamma}: {} vs {exact}",
            sample.width()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn gaussian_intervals_are_symmetric_and_scale(seed in any::<u64>(), m in 1usize..6, gamma in 0.05f64..0.99) {
        let mut r = rng(seed);
        let s = random_state(&mut r, m);
        let iv = hpd_intervals_gaussian(&s, gamma).unwrap();
        let scaled = GaussianState::new(s.mean.clone(), s.cov.scaled(4.0)).unwrap();
        let iv2 = hpd_intervals_gaussian(&scaled, gamma).unwrap();
        for i in 0..m {
            let mid = 0.5 * (iv[i].lower + iv[i].upper);
            prop_assert!((mid - s.mean[i]).abs() <= 1e-12 * (1.0 + s.mean[i].abs()));
            prop_assert!((iv2[i].width() - 2.0 * iv[i].width()).abs() <= 1e-12 * iv[i].width().max(1.0));
        }
    }

    #[test]
    fn comparison_is_symmetric_in_distances(seed in any::<u64>(), m in 1usize..6) {
        let mut r = rng(seed);
        let (a, b) = (random_state(&mut r, m), random_state(&mut r, m));
        let ab = compare_gaussians(&a, &b).unwrap();
        let ba = compare_gaussians(&b, &a).unwrap();
        prop_assert_eq!(ab.mean_l2, ba.mean_l2);
        prop_assert!((ab.cov_spectral - ba.cov_spectral).abs() <= 1e-12 * ab.cov_spectral.max(1.0));
        prop_assert_eq!(ab.kl_12, ba.kl_21);
        prop_assert!(ab.kl_12 >= 0.0 && ab.kl_21 >= 0.0);
    }

    #[test]
    fn laplace_covariance_is_below_prior(seed in any::<u64>(), m in 1usize..6, n in 1usize..8) {
        let p = random_problem(seed, m, n, PriorKind::H1, 1.0);
        let q = laplace_approximation(&p).unwrap();
        prop_assert!(loewner_le(q.cov.as_matrix(), p.prior.covariance_matrix().as_matrix(), 1e-10));
    }
}

/// With one observation `y = 0` the VGA mean solves `x + e^{x + C/2} = 0`
/// while the MAP solves `x + e^x = 0`; the two differ by the variance shift.
#[test]
fn laplace_and_vga_means_differ() {
    let p = scalar_problem(vec![1.0], vec![0], 1.0);
    let (v, _) = run_vga(&p, &VgaConfig::default()).unwrap();
    let l = laplace_approximation(&p).unwrap();
    let map = bisect(|x| x + x.exp(), -2.0, 0.0);
    assert!((l.mean[0] - map).abs() <= 1e-10);
    let c = v.cov.as_matrix()[(0, 0)];
    let r = v.mean[0] + (v.mean[0] + 0.5 * c).exp();
    assert!(r.abs() <= 1e-6, "{r}");
    assert!((v.mean[0] - l.mean[0]).abs() > 1e-3);
}

#[test]
fn short_chain_agrees_with_long_reference() {
    let p = random_problem(19, 4, 8, PriorKind::L2, 2.0);
    let (q, _) = run_vga(&p, &VgaConfig::default()).unwrap();
    let short = McmcConfig {
        chain_length: 20_000,
        burn_in: 5_000,
        seed: 1,
        ..Default::default()
    };
    let long = McmcConfig {
        chain_length: 100_000,
        burn_in: 25_000,
        seed: 2,
        ..Default::default()
    };
    let a = mh_independence_sampler(&p, &q, &short).unwrap();
    let b = mh_independence_sampler(&p, &q, &long).unwrap();
    for i in 0..4 {
        let se = (a.mean_standard_error[i].powi(2) + b.mean_standard_error[i].powi(2)).sqrt();
        assert!((a.mean[i] - b.mean[i]).abs() <= 4.0 * se, "coordinate {i}");
    }
    let rel = (&a.covariance - &b.covariance).norm() / b.covariance.norm();
    assert!(rel <= 0.1, "{rel}");
}

#[test]
fn sampler_is_deterministic_per_seed() {
    let p = scalar_problem(vec![0.8, -0.3], vec![2, 1], 1.0);
    let proposal =
        GaussianState::new(DVector::zeros(1), SpdMatrix::new(dmatrix![0.5]).unwrap()).unwrap();
    let cfg = McmcConfig {
        chain_length: 2_000,
        burn_in: 500,
        seed: 9,
        store_samples: true,
        ..Default::default()
    };
    let a = mh_independence_sampler(&p, &proposal, &cfg).unwrap();
    let b = mh_independence_sampler(&p, &proposal, &cfg).unwrap();
    assert_eq!(a, b);
    let c = mh_independence_sampler(&p, &proposal, &McmcConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.mean, c.mean);
    assert!(mh_independence_sampler(
        &p,
        &proposal,
        &McmcConfig {
            burn_in: 2_000,
            ..cfg
        }
    )
    .is_err());
}
