//! Causal abstraction by coarsening: the lattice of acyclic quotients of a
//! DAG, and learning the interventional coarsening from data by recursive
//! partition refinement.

pub mod coarsening;
pub mod engine;
pub mod graph;
pub mod io;
pub mod lattice;
pub mod metrics;
pub mod pipeline;
pub mod scm;
pub mod stats;

pub use coarsening::{induce, interventional_coarsening, marginal_coarsening, Coarsening, CoarseningError, Partition};
pub use engine::{repare, EdgeOracle, EdgeQuery, EngineError, LearningTrace, RefineOracle};
pub use graph::{Dag, GraphError, NodeSet};
pub use stats::{DescendantMatrix, EnvironmentData, TestConfig};
