//! End-to-end learning: standardize, build the oracles, run RePaRe.

use crate::coarsening::{Coarsening, CoarseningError};
use crate::engine::{repare, EngineError, ExactEdgeOracle, LearningTrace, SignatureRefineOracle};
use crate::graph::{Dag, GraphError, NodeSet};
use crate::stats::{descendant_matrix, CiEdgeOracle, DescendantMatrix, EnvironmentData, StatsError, TestConfig};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Coarsening(#[from] CoarseningError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{0}")]
    Other(String),
}

#[derive(Clone, Debug)]
pub struct LearnOutcome {
    pub config: TestConfig,
    pub coarsening: Coarsening,
    pub trace: LearningTrace,
    pub descendants: DescendantMatrix,
}

/// Standardizes `data` and learns a coarsening from it.
pub fn learn(data: &EnvironmentData, config: &TestConfig) -> Result<LearnOutcome, PipelineError> {
    let (std, _) = data.standardized();
    learn_standardized(&std, config, None)
}

/// Learns from already standardized data. A precomputed descendant matrix
/// is re-thresholded at `config.alpha_ref` instead of being re-tested.
pub fn learn_standardized(
    data: &EnvironmentData,
    config: &TestConfig,
    pvalues: Option<&DescendantMatrix>,
) -> Result<LearnOutcome, PipelineError> {
    config.validate()?;
    let m = match pvalues {
        Some(m) => m.with_alpha(config.alpha_ref),
        None => descendant_matrix(data, config.alpha_ref)?,
    };
    let refine = SignatureRefineOracle::new(&m);
    let edge = CiEdgeOracle::new(data, *config);
    let (coarsening, trace) = repare(data.d(), &refine, &edge)?;
    Ok(LearnOutcome {
        config: *config,
        coarsening,
        trace,
        descendants: m,
    })
}

/// Noise-free run: signatures read off the graph and edges decided exactly.
pub fn learn_exact(g: &Dag, interventions: &[NodeSet]) -> Result<(Coarsening, LearningTrace), PipelineError> {
    let m = DescendantMatrix::from_graph(g, interventions)?;
    Ok(repare(g.node_count(), &SignatureRefineOracle::new(&m), &ExactEdgeOracle::new(g))?)
}
