//! Variational Gaussian approximation (VGA) for Poisson inverse problems with
//! a log link and a Gaussian prior.
//!
//! Observations `yᵢ ~ Pois(e^{(aᵢ, x)})` and a prior `x ~ N(μ0, C0)` give a
//! posterior with no closed form. The crate finds the Gaussian `N(x̄, C)`
//! closest to it in Kullback–Leibler divergence by maximizing the evidence
//! lower bound, alternating Newton steps on `x̄` with a fixed-point update on
//! `C`.
//!
//! - [`linalg`]: Cholesky, PCG, randomized SVD, the Woodbury covariance update
//!   and sparsity masks.
//! - [`model`]: forward operators, priors, count data and test problems.
//! - [`elbo`]: the bound, its gradients and Gaussian divergences.
//! - [`vga`]: the alternating solver in dense, low-rank and sparse modes.
//! - [`hyper`]: EM selection of the prior strength under a Gamma hyperprior.
//! - [`validate`]: MAP/Laplace, an independence Metropolis–Hastings sampler,
//!   HPD intervals and the covariance orbit diagnostics.
//!
//! ```
//! use std::sync::Arc;
//! use poisson_vga::model::{make_prior, make_test_problem, sample_poisson_data};
//! use poisson_vga::model::{PoissonProblem, PriorKind, ProblemName, ProblemParams};
//! use poisson_vga::vga::{run_vga, VgaConfig};
//!
//! let tp = make_test_problem(ProblemName::Phillips, 40, &ProblemParams::default())?;
//! let y = sample_poisson_data(&tp.operator, &tp.x_true, 7)?;
//! let prior = make_prior(PriorKind::L2, 10.0, 40, None)?;
//! let problem = PoissonProblem::new(Arc::new(tp.operator), Arc::new(y), prior)?;
//!
//! let (state, report) = run_vga(&problem, &VgaConfig::default())?;
//! assert!(report.converged);
//! assert_eq!(state.mean.len(), 40);
//! # Ok::<(), poisson_vga::VgaError>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod elbo;
pub mod error;
pub mod hyper;
pub mod linalg;
pub mod model;
pub mod validate;
pub mod vga;

pub use error::{Result, VgaError};

// The guide's code blocks are compiled and run as doctests.
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod book_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/model.md")]
pub mod book_model {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/elbo.md")]
pub mod book_elbo {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/solver.md")]
pub mod book_solver {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/scaling.md")]
pub mod book_scaling {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/hierarchical.md")]
pub mod book_hierarchical {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/validation.md")]
pub mod book_validation {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
pub mod book_cli {}
