mod common;

use std::sync::Arc;

use common::*;
use nalgebra::DMatrix;
use poisson_vga::elbo::elbo;
use poisson_vga::hyper::{
    hyperprior_offset, joint_lower_bound, phi_psi, psi, run_hierarchical, update_alpha, HyperConfig,
};
use poisson_vga::model::{make_prior, ForwardOperator, PoissonData, PoissonProblem, PriorKind};
use poisson_vga::vga::{run_vga, VgaConfig};
use proptest::prelude::*;
use statrs::function::gamma::ln_gamma;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn joint_bound_offset_and_split(seed in any::<u64>(), m in 1usize..=6, alpha in 0.05f64..20.0) {
        let p = random_problem(seed, m, m + 2, PriorKind::H1, 1.0);
        let mut r = rng(seed);
        let s = random_state(&mut r, m);
        let (a, b) = (1.7, 0.3);
        let f_alpha = elbo(&s, &p.with_alpha(alpha).unwrap()).unwrap().total;
        let j = joint_lower_bound(&s, alpha, &p, a, b).unwrap();
        let offset = (a - 1.0) * alpha.ln() - alpha * b + a * b.ln() - ln_gamma(a);
        prop_assert!((j - f_alpha - offset).abs() <= 1e-10 * j.abs().max(1.0));

        let pa = p.with_alpha(alpha).unwrap();
        let (phi, psi_v) = phi_psi(&s, &pa).unwrap();
        prop_assert!(psi_v <= 0.0);
        prop_assert!((phi + alpha * psi_v - f_alpha).abs() <= 1e-10 * f_alpha.abs().max(1.0));
        let next = update_alpha(&s, p.prior.structure(), a, b).unwrap();
        let via_psi = (m as f64 / 2.0 + a - 1.0) / (-psi_v + b);
        prop_assert!((next - via_psi).abs() <= 1e-12 * next);
    }
}

#[test]
fn m_step_is_stationary_in_alpha() {
    let p = random_problem(5, 4, 6, PriorKind::L2, 1.0);
    let mut r = rng(5);
    let s = random_state(&mut r, 4);
    let (a, b) = (1.0, 1e-4);
    let star = update_alpha(&s, p.prior.structure(), a, b).unwrap();
    let h = 1e-5 * star;
    let d = (joint_lower_bound(&s, star + h, &p, a, b).unwrap()
        - joint_lower_bound(&s, star - h, &p, a, b).unwrap())
        / (2.0 * h);
    assert!(d.abs() <= 1e-5, "{d}");
}

#[test]
fn unit_hyperprior_offset_is_minus_alpha() {
    for alpha in [0.1, 1.0, 3.5] {
        assert!((hyperprior_offset(alpha, 1.0, 1.0).unwrap() + alpha).abs() <= 1e-15);
    }
}

/// With `A = 0` the E-step is `(μ0, α⁻¹I)`, so the EM map is the scalar map
/// `α ↦ (m + 2(a-1)) / (m/α + 2b)`; its fixed point is found by bisection.
#[test]
fn zero_operator_em_matches_scalar_fixed_point() {
    let m = 5;
    let (a, b) = (1.5, 0.2);
    let p = PoissonProblem::new(
        Arc::new(ForwardOperator::Dense(DMatrix::zeros(2, m))),
        Arc::new(PoissonData::new(vec![0, 0])),
        make_prior(PriorKind::L2, 1.0, m, None).unwrap(),
    )
    .unwrap();
    let map = |al: f64| (m as f64 + 2.0 * (a - 1.0)) / (m as f64 / al + 2.0 * b);
    let oracle = bisect(|al| map(al) - al, 0.1, 100.0);
    for start in [0.2, 20.0] {
        let cfg = HyperConfig {
            a,
            b,
            alpha_init: start,
            max_em: 1000,
            ..Default::default()
        };
        let res = run_hierarchical(&p, &cfg).unwrap();
        assert!(res.trace.converged);
        assert!((res.alpha - oracle).abs() <= 1e-6 * oracle);
        let inc: Vec<f64> = res
            .trace
            .alpha_sequence
            .windows(2)
            .map(|w| w[1] - w[0])
            .collect();
        assert!(inc
            .iter()
            .all(|d| d.signum() == inc[0].signum() || *d == 0.0));
    }
}

#[test]
fn em_trace_is_monotone_bounded_and_ascending() {
    let p = random_problem(77, 10, 20, PriorKind::H1, 1.0);
    let cfg = HyperConfig {
        alpha_init: 5.0,
        max_em: 1000,
        ..Default::default()
    };
    let res = run_hierarchical(&p, &cfg).unwrap();
    assert!(res.trace.converged);
    let bound = cfg.alpha_upper_bound(10);
    assert!(res
        .trace
        .alpha_sequence
        .iter()
        .all(|&al| al > 0.0 && al <= bound));
    let inc: Vec<f64> = res
        .trace
        .alpha_sequence
        .windows(2)
        .map(|w| w[1] - w[0])
        .collect();
    assert!(inc.iter().all(|d| d.signum() == inc[0].signum()));
    for w in res.trace.joint_bound_sequence.windows(2) {
        assert!(w[1] >= w[0] - 1e-8);
    }
    let check = update_alpha(&res.state, p.prior.structure(), cfg.a, cfg.b).unwrap();
    assert!((check - res.alpha).abs() <= 1e-6 * res.alpha);
}

#[test]
fn psi_increases_with_alpha() {
    let p = random_problem(31, 8, 12, PriorKind::L2, 1.0);
    let mut last = f64::NEG_INFINITY;
    for scale in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let (s, _) = run_vga(&p.with_alpha(scale).unwrap(), &VgaConfig::default()).unwrap();
        let v = psi(&s, p.prior.structure());
        assert!(v > last + 1e-10, "{v} !> {last}");
        last = v;
    }
}

#[test]
fn invalid_alpha_is_rejected() {
    let p = random_problem(1, 2, 2, PriorKind::L2, 1.0);
    let s = random_state(&mut rng(1), 2);
    assert!(joint_lower_bound(&s, 0.0, &p, 1.0, 1.0).is_err());
    assert!(joint_lower_bound(&s, -1.0, &p, 1.0, 1.0).is_err());
}
