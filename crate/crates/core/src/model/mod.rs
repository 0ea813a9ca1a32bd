//! The Poisson log-linear observation model, Gaussian priors and synthetic
//! test problems.

mod data;
mod operator;
mod prior;
mod problems;

use std::sync::Arc;

pub use data::{
    log_joint, log_likelihood, log_likelihood_from_predictor, log_prior, sample_poisson_data,
    PoissonData, MAX_EXPONENT,
};
pub use operator::{ForwardOperator, GaussianBlur2d, Toeplitz};
pub use prior::{
    difference_matrix, make_prior, make_structure, PriorKind, PriorSpec, PriorStructure,
};
pub use problems::{
    make_test_problem, rate_scale, two_blobs, ProblemName, ProblemParams, RateScale, TestProblem,
};

use crate::error::{Result, VgaError};

/// Forward operator, data and prior bundled together.
#[derive(Debug, Clone)]
pub struct PoissonProblem {
    pub operator: Arc<ForwardOperator>,
    pub data: Arc<PoissonData>,
    pub prior: PriorSpec,
}

impl PoissonProblem {
    pub fn new(
        operator: Arc<ForwardOperator>,
        data: Arc<PoissonData>,
        prior: PriorSpec,
    ) -> Result<Self> {
        if data.len() != operator.nrows() {
            return Err(VgaError::DimensionMismatch {
                context: "PoissonProblem data",
                expected: operator.nrows(),
                found: data.len(),
            });
        }
        if prior.dim() != operator.ncols() {
            return Err(VgaError::DimensionMismatch {
                context: "PoissonProblem prior",
                expected: operator.ncols(),
                found: prior.dim(),
            });
        }
        Ok(Self {
            operator,
            data,
            prior,
        })
    }

    pub fn dim(&self) -> usize {
        self.operator.ncols()
    }

    pub fn n_obs(&self) -> usize {
        self.operator.nrows()
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Ok(Self {
            operator: Arc::clone(&self.operator),
            data: Arc::clone(&self.data),
            prior: self.prior.with_alpha(alpha)?,
        })
    }

    pub fn with_operator(&self, operator: ForwardOperator) -> Result<Self> {
        Self::new(
            Arc::new(operator),
            Arc::clone(&self.data),
            self.prior.clone(),
        )
    }

    pub fn log_joint(&self, x: &nalgebra::DVector<f64>) -> Result<f64> {
        log_joint(x, &self.operator, &self.data, &self.prior)
    }
}
