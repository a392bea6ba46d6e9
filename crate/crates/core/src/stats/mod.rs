//! Hypothesis tests backing the statistical refine and edge oracles.

mod cca;
mod data;
mod descendants;
mod oracles;
mod welch;

pub use cca::{cca_wilks_test, centered_scatter, conditional_wilks_from_scatter, ols_residualize, WilksOutcome};
pub use data::{Environment, EnvironmentData, Standardization};
pub use descendants::{descendant_matrix, DescendantMatrix};
pub use oracles::{is_edge_test, statistical_oracles, CiEdgeOracle};
pub use welch::welch_t_test;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("sample too small: {0}")]
    SampleTooSmall(String),
    #[error("dimension mismatch: expected {expected} columns, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("row counts differ: {0} vs {1}")]
    RowMismatch(usize, usize),
    #[error("invalid test configuration: {0}")]
    InvalidConfig(String),
    #[error("node {node} out of range for d = {d}")]
    NodeOutOfRange { node: usize, d: usize },
    #[error("every column is constant")]
    Degenerate,
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

/// Significance levels for the two test families and the ridge added to
/// covariance matrices before inversion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub alpha_ref: f64,
    pub alpha_edge: f64,
    #[serde(default = "default_ridge")]
    pub ridge_epsilon: f64,
}

fn default_ridge() -> f64 {
    1e-8
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            alpha_ref: 0.05,
            alpha_edge: 0.05,
            ridge_epsilon: default_ridge(),
        }
    }
}

impl TestConfig {
    pub fn new(alpha_ref: f64, alpha_edge: f64) -> Result<Self, StatsError> {
        let c = TestConfig {
            alpha_ref,
            alpha_edge,
            ..Default::default()
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        for (name, a) in [("alpha_ref", self.alpha_ref), ("alpha_edge", self.alpha_edge)] {
            if !(a > 0.0 && a < 1.0) {
                return Err(StatsError::InvalidConfig(format!("{name} = {a} is not in (0, 1)")));
            }
        }
        if !(self.ridge_epsilon >= 0.0 && self.ridge_epsilon.is_finite()) {
            return Err(StatsError::InvalidConfig(format!(
                "ridge_epsilon = {} must be a finite non-negative number",
                self.ridge_epsilon
            )));
        }
        Ok(())
    }
}
