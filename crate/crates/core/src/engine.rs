//! Recursive partition refinement (RePaRe) as a lattice descent driven by a
//! refine oracle and an edge oracle.
//!
//! The descent starts at `{V}` with no edges. Each step splits one part
//! `π*` into `(π_a, π_b)`, keeps every edge not touching `π*`, and re-derives
//! the edges of the two new parts by asking the edge oracle a fixed sequence
//! of queries:
//!
//! 1. between the split halves, given the parents of `π*`;
//! 2. from each parent of `π*` into `π_a`, then into `π_b`;
//! 3. from `π_a`, then `π_b`, into each child of `π*`.
//!
//! Parents and children are visited in part-index order, so a run is fully
//! determined by its oracles.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::coarsening::{Coarsening, CoarseningError, Partition};
use crate::graph::{Dag, NodeSet};
use crate::stats::DescendantMatrix;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("refine oracle returned an invalid split: {0}")]
    InvalidSplit(String),
    #[error("proposed edge set is cyclic through parts {}", .cycle.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" -> "))]
    CyclicProposal { cycle: Vec<NodeSet> },
    #[error("conditioning part {0} overlaps a tested part")]
    ConditioningOverlap(NodeSet),
    #[error("current partition is not a coarsening of the oracle's target")]
    NotCoarseningTarget,
    #[error("oracle failed: {0}")]
    Oracle(#[source] Box<dyn std::error::Error + Send + Sync>),
    #[error(transparent)]
    Coarsening(#[from] CoarseningError),
}

/// Which directions the between-split query is asked in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitOrientation {
    /// Only `π_a → π_b` is possible.
    AToB,
    /// Only `π_b → π_a` is possible.
    BToA,
    /// Ask both directions.
    Both,
    /// No edge between the halves is possible.
    Neither,
}

/// A split of part `target_part` of the current partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RefineDecision {
    pub target_part: usize,
    pub part_a: NodeSet,
    pub part_b: NodeSet,
    pub orientation: SplitOrientation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryKind {
    BetweenSplit,
    ParentOfSplit,
    ChildOfSplit,
}

/// "Is there an edge `from → to`?", to be decided with the listed parts held
/// fixed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EdgeQuery {
    pub kind: QueryKind,
    pub from: NodeSet,
    pub to: NodeSet,
    pub conditioning: Vec<NodeSet>,
}

impl EdgeQuery {
    /// Union of the conditioning parts.
    pub fn conditioning_nodes(&self) -> NodeSet {
        self.conditioning.iter().flat_map(|p| p.iter()).collect()
    }
}

pub trait RefineOracle {
    /// Proposes a split of the current coarsening, or `None` to stop.
    fn refine(&self, current: &Coarsening) -> Result<Option<RefineDecision>, EngineError>;
}

pub trait EdgeOracle {
    fn is_edge(&self, query: &EdgeQuery) -> Result<bool, EngineError>;
}

impl<F> RefineOracle for F
where
    F: Fn(&Coarsening) -> Result<Option<RefineDecision>, EngineError>,
{
    fn refine(&self, current: &Coarsening) -> Result<Option<RefineDecision>, EngineError> {
        self(current)
    }
}

impl<F> EdgeOracle for F
where
    F: Fn(&EdgeQuery) -> Result<bool, EngineError>,
{
    fn is_edge(&self, query: &EdgeQuery) -> Result<bool, EngineError> {
        self(query)
    }
}

/// One split of a run.
#[derive(Clone, Debug, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub partition: Partition,
    pub decision: RefineDecision,
    pub queries: Vec<AnsweredQuery>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnsweredQuery {
    #[serde(flatten)]
    pub query: EdgeQuery,
    pub result: bool,
}

/// Record of every split and edge query of a run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct LearningTrace {
    pub steps: Vec<TraceStep>,
}

impl LearningTrace {
    /// One JSON object per line, one line per split.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            out.push_str(&serde_json::to_string(step).expect("trace serializes"));
            out.push('\n');
        }
        out
    }

    pub fn query_count(&self) -> usize {
        self.steps.iter().map(|s| s.queries.len()).sum()
    }
}

/// Runs the descent from `{V}` over `d` nodes until the refine oracle stops.
pub fn repare<R, E>(d: usize, refine: &R, edge: &E) -> Result<(Coarsening, LearningTrace), EngineError>
where
    R: RefineOracle + ?Sized,
    E: EdgeOracle + ?Sized,
{
    let mut state = Coarsening::trivial(d);
    let mut trace = LearningTrace::default();
    while let Some(decision) = refine.refine(&state)? {
        check_split(&state, &decision)?;
        let (next, queries) = split_step(&state, &decision, edge)?;
        trace.steps.push(TraceStep {
            step: trace.steps.len(),
            partition: state.partition().clone(),
            decision,
            queries,
        });
        state = next;
    }
    Ok((state, trace))
}

fn check_split(state: &Coarsening, decision: &RefineDecision) -> Result<(), EngineError> {
    let k = state.len();
    if decision.target_part >= k {
        return Err(EngineError::InvalidSplit(format!(
            "part index {} out of range for {k} parts",
            decision.target_part
        )));
    }
    let target = state.partition().part(decision.target_part);
    let (a, b) = (&decision.part_a, &decision.part_b);
    if a.is_empty() || b.is_empty() {
        return Err(EngineError::InvalidSplit("empty half".into()));
    }
    if !a.is_disjoint(b) || a.union(b) != *target {
        return Err(EngineError::InvalidSplit(format!("{a} and {b} do not partition {target}")));
    }
    Ok(())
}

/// Applies one split: issues the edge schedule and builds the refined
/// coarsening.
fn split_step<E: EdgeOracle + ?Sized>(
    state: &Coarsening,
    decision: &RefineDecision,
    oracle: &E,
) -> Result<(Coarsening, Vec<AnsweredQuery>), EngineError> {
    let old = state.partition();
    let star = decision.target_part;
    let a = decision.part_a.clone();
    let b = decision.part_b.clone();

    let parents: Vec<NodeSet> = state.parents_of(star).into_iter().map(|i| old.part(i).clone()).collect();
    let children: Vec<usize> = state.children_of(star);

    let mut answered = Vec::new();
    let mut ask = |query: EdgeQuery| -> Result<bool, EngineError> {
        for z in &query.conditioning {
            if !z.is_disjoint(&query.from) || !z.is_disjoint(&query.to) {
                return Err(EngineError::ConditioningOverlap(z.clone()));
            }
        }
        let result = oracle.is_edge(&query)?;
        answered.push(AnsweredQuery { query, result });
        Ok(result)
    };

    // accepted edges as (from, to) part sets
    let mut accepted: Vec<(NodeSet, NodeSet)> = Vec::new();

    // 1. between the halves
    let mut a_to_b = false;
    let mut b_to_a = false;
    let between = |from: &NodeSet, to: &NodeSet| EdgeQuery {
        kind: QueryKind::BetweenSplit,
        from: from.clone(),
        to: to.clone(),
        conditioning: parents.clone(),
    };
    if matches!(decision.orientation, SplitOrientation::AToB | SplitOrientation::Both) {
        a_to_b = ask(between(&a, &b))?;
    }
    if matches!(decision.orientation, SplitOrientation::BToA | SplitOrientation::Both) && !a_to_b {
        b_to_a = ask(between(&b, &a))?;
    }
    if a_to_b {
        accepted.push((a.clone(), b.clone()));
    }
    if b_to_a {
        accepted.push((b.clone(), a.clone()));
    }

    // 2. parents of the split part
    for (i, p) in parents.iter().enumerate() {
        let others: Vec<NodeSet> = parents
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, q)| q.clone())
            .collect();
        for (new, sibling, sibling_is_parent) in [(&a, &b, b_to_a), (&b, &a, a_to_b)] {
            let mut conditioning = others.clone();
            if sibling_is_parent {
                conditioning.push(sibling.clone());
            }
            let query = EdgeQuery {
                kind: QueryKind::ParentOfSplit,
                from: p.clone(),
                to: new.clone(),
                conditioning,
            };
            if ask(query)? {
                accepted.push((p.clone(), new.clone()));
            }
        }
    }

    // 3. children of the split part
    for &c in &children {
        let child = old.part(c).clone();
        let carried: Vec<NodeSet> = state
            .parents_of(c)
            .into_iter()
            .filter(|&j| j != star)
            .map(|j| old.part(j).clone())
            .collect();
        for (new, sibling) in [(&a, &b), (&b, &a)] {
            let mut conditioning = carried.clone();
            conditioning.push(sibling.clone());
            let query = EdgeQuery {
                kind: QueryKind::ChildOfSplit,
                from: new.clone(),
                to: child.clone(),
                conditioning,
            };
            if ask(query)? {
                accepted.push((new.clone(), child.clone()));
            }
        }
    }

    // rebuild partition and edges
    let mut parts: Vec<NodeSet> = old
        .parts()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != star)
        .map(|(_, p)| p.clone())
        .collect();
    parts.push(a);
    parts.push(b);
    let next = Partition::from_parts(old.node_count(), parts)?;
    let index_of = |set: &NodeSet| next.part_of(set.min().expect("non-empty part"));
    let mut edges: BTreeSet<(usize, usize)> = state
        .edges()
        .iter()
        .filter(|&&(u, v)| u != star && v != star)
        .map(|&(u, v)| (index_of(old.part(u)), index_of(old.part(v))))
        .collect();
    for (from, to) in &accepted {
        edges.insert((index_of(from), index_of(to)));
    }
    match Coarsening::from_parts_and_edges(next, edges) {
        Ok(c) => Ok((c, answered)),
        Err(CoarseningError::Cyclic { cycle }) => Err(EngineError::CyclicProposal { cycle }),
        Err(e) => Err(e.into()),
    }
}

/// Refine oracle that walks toward a known valid coarsening of `g`: it splits
/// the first part that is not yet a target part and peels off a source among
/// the target sub-parts it contains.
pub struct ExactRefineOracle {
    target: Coarsening,
}

impl ExactRefineOracle {
    pub fn new(g: &Dag, target: &Partition) -> Result<Self, EngineError> {
        Ok(ExactRefineOracle {
            target: crate::coarsening::induce(g, target)?,
        })
    }
}

impl RefineOracle for ExactRefineOracle {
    fn refine(&self, current: &Coarsening) -> Result<Option<RefineDecision>, EngineError> {
        let target = self.target.partition();
        let cur = current.partition();
        if cur.node_count() != target.node_count() || !target.refines_unchecked(cur) {
            return Err(EngineError::NotCoarseningTarget);
        }
        if cur == target {
            return Ok(None);
        }
        for (i, part) in cur.parts().iter().enumerate() {
            let subparts: Vec<usize> = {
                let mut s: Vec<usize> = part.iter().map(|v| target.part_of(v)).collect();
                s.sort_unstable();
                s.dedup();
                s
            };
            if subparts.len() < 2 {
                continue;
            }
            let source = subparts
                .iter()
                .copied()
                .find(|&r| {
                    !self
                        .target
                        .edges()
                        .iter()
                        .any(|&(u, v)| v == r && u != r && subparts.contains(&u))
                })
                .expect("acyclic target has a source among any set of parts");
            let part_a = target.part(source).clone();
            let part_b = part.difference(&part_a);
            return Ok(Some(RefineDecision {
                target_part: i,
                part_a,
                part_b,
                orientation: SplitOrientation::AToB,
            }));
        }
        unreachable!("partition differs from the target but every part is a target part")
    }
}

/// Edge oracle answering from the fine graph: an edge `U → W` exists iff some
/// node of `U` is a parent of some node of `W`. Conditioning sets are ignored.
pub struct ExactEdgeOracle<'g> {
    g: &'g Dag,
}

impl<'g> ExactEdgeOracle<'g> {
    pub fn new(g: &'g Dag) -> Self {
        ExactEdgeOracle { g }
    }
}

impl EdgeOracle for ExactEdgeOracle<'_> {
    fn is_edge(&self, query: &EdgeQuery) -> Result<bool, EngineError> {
        Ok(query
            .to
            .iter()
            .any(|w| self.g.parents_of(w).iter().any(|&u| query.from.contains(u))))
    }
}

/// Refine oracle driven only by the boolean descendant matrix: the first
/// part (in index order) holding more than one row pattern is split into the
/// nodes sharing the pivot's pattern and the rest.
///
/// The pivot is the smallest node whose pattern is minimal under inclusion
/// among the patterns present in the part. No node of the rest can then be
/// an ancestor of the pivot class, so each intermediate quotient stays
/// acyclic, and the only possible edge between the halves runs from the
/// pivot class into nodes whose pattern strictly contains the pivot's.
pub struct SignatureRefineOracle {
    rows: Vec<Vec<bool>>,
}

impl SignatureRefineOracle {
    pub fn new(m: &DescendantMatrix) -> Self {
        SignatureRefineOracle {
            rows: (0..m.node_count()).map(|v| m.row(v).to_vec()).collect(),
        }
    }

    pub fn from_rows(rows: Vec<Vec<bool>>) -> Self {
        SignatureRefineOracle { rows }
    }
}

fn strict_subset(x: &[bool], y: &[bool]) -> bool {
    x != y && x.iter().zip(y).all(|(&a, &b)| !a || b)
}

impl RefineOracle for SignatureRefineOracle {
    fn refine(&self, current: &Coarsening) -> Result<Option<RefineDecision>, EngineError> {
        for (i, part) in current.partition().parts().iter().enumerate() {
            if part.len() < 2 {
                continue;
            }
            let first = &self.rows[part.min().expect("non-empty part")];
            if part.iter().all(|v| &self.rows[v] == first) {
                continue;
            }
            let pivot = part
                .iter()
                .find(|&u| !part.iter().any(|w| strict_subset(&self.rows[w], &self.rows[u])))
                .expect("a finite poset has a minimal element");
            let pattern = &self.rows[pivot];
            let part_a: NodeSet = part.iter().filter(|&v| &self.rows[v] == pattern).collect();
            let part_b = part.difference(&part_a);
            let orientation = if part_b.iter().any(|v| strict_subset(pattern, &self.rows[v])) {
                SplitOrientation::AToB
            } else {
                SplitOrientation::Neither
            };
            return Ok(Some(RefineDecision {
                target_part: i,
                part_a,
                part_b,
                orientation,
            }));
        }
        Ok(None)
    }
}
