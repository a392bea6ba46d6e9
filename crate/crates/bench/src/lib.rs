//! Fixtures shared by the benchmarks.

use coarse_causal::scm::{experiment_suite, ExperimentParams, GraphFamily};
use coarse_causal::{Dag, EnvironmentData, NodeSet};

/// Standardized ER data with five interventions, as in the runtime study.
pub fn standardized_data(d: usize, n: usize, seed: u64) -> EnvironmentData {
    let e = experiment_suite(&ExperimentParams::new(GraphFamily::Er, d, 0.2, 5.min(d), n), seed).expect("valid parameters");
    e.data.standardized().0
}

/// Raw data plus the graph and targets it was drawn from.
pub fn raw_experiment(d: usize, n: usize, seed: u64) -> (EnvironmentData, Dag, Vec<NodeSet>) {
    let e = experiment_suite(&ExperimentParams::new(GraphFamily::Er, d, 0.2, 5.min(d), n), seed).expect("valid parameters");
    let targets = e.intervention_targets();
    (e.data, e.graph, targets)
}
