//! Reference approximations and samplers used to check the variational
//! solution: MAP/Laplace, an independence Metropolis–Hastings chain, HPD
//! intervals, Gaussian comparisons and the covariance orbit diagnostics.

mod compare;
mod hpd;
mod laplace;
mod mcmc;
mod orbit;

pub use compare::{compare_gaussians, GaussianComparison};
pub use hpd::{hpd_intervals_gaussian, hpd_intervals_samples, Interval, MIN_HPD_SAMPLES};
pub use laplace::{laplace_approximation, laplace_hessian, map_estimate};
pub use mcmc::{mh_independence_sampler, ChainSummary, McmcConfig, MAX_SAMPLING_DIM};
pub use orbit::{orbit_check, OrbitDiagnostics};
