//! Partitions of the node set and the coarsenings they induce.
//!
//! A [`Coarsening`] keeps one edge between two parts whenever some fine edge
//! crosses between them, and is valid only when that quotient is acyclic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::{find_cycle, Dag, GraphError, NodeSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoarseningError {
    #[error("expected a partition of {expected} nodes, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("not a partition: {0}")]
    NotAPartition(String),
    #[error("quotient graph has a directed cycle through parts {}", fmt_parts(.cycle))]
    Cyclic { cycle: Vec<NodeSet> },
    #[error("input is not a valid coarsening of the graph")]
    NotACoarsening,
    #[error("lattice enumeration on {d} nodes exceeds the cap of {cap}")]
    TooLarge { d: usize, cap: usize },
    #[error("coarsening list is not closed under meet and join")]
    NotClosed,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn fmt_parts(parts: &[NodeSet]) -> String {
    parts.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" -> ")
}

/// Disjoint cover of `0..d` by non-empty parts, kept in canonical order
/// (parts sorted by their smallest node).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct Partition {
    parts: Vec<NodeSet>,
    part_of: Vec<usize>,
}

impl Partition {
    pub fn from_parts(d: usize, parts: impl IntoIterator<Item = NodeSet>) -> Result<Self, CoarseningError> {
        let mut parts: Vec<NodeSet> = parts.into_iter().collect();
        let mut owner = vec![usize::MAX; d];
        let mut covered = 0;
        for part in &parts {
            if part.is_empty() {
                return Err(CoarseningError::NotAPartition("empty part".into()));
            }
            for v in part.iter() {
                if v >= d {
                    return Err(CoarseningError::NotAPartition(format!("node {} outside 1..={d}", v + 1)));
                }
                if owner[v] != usize::MAX {
                    return Err(CoarseningError::NotAPartition(format!("node {} in two parts", v + 1)));
                }
                owner[v] = 0;
                covered += 1;
            }
        }
        if covered != d {
            return Err(CoarseningError::DimensionMismatch { expected: d, found: covered });
        }
        parts.sort_unstable_by_key(|p| p.min());
        Ok(Self::from_sorted_parts(d, parts))
    }

    fn from_sorted_parts(d: usize, parts: Vec<NodeSet>) -> Self {
        let mut part_of = vec![0; d];
        for (i, part) in parts.iter().enumerate() {
            for v in part.iter() {
                part_of[v] = i;
            }
        }
        Partition { parts, part_of }
    }

    /// Groups nodes carrying equal keys; `keys[v]` is the key of node `v`.
    pub fn from_keys<K: Ord>(keys: &[K]) -> Self {
        let mut groups: BTreeMap<&K, Vec<usize>> = BTreeMap::new();
        for (v, k) in keys.iter().enumerate() {
            groups.entry(k).or_default().push(v);
        }
        let mut parts: Vec<NodeSet> = groups.into_values().map(NodeSet::from).collect();
        parts.sort_unstable_by_key(|p| p.min());
        Self::from_sorted_parts(keys.len(), parts)
    }

    /// The single-part partition `{V}`.
    pub fn trivial(d: usize) -> Self {
        Self::from_sorted_parts(d, vec![NodeSet::full(d)])
    }

    /// All singletons.
    pub fn discrete(d: usize) -> Self {
        Self::from_sorted_parts(d, (0..d).map(NodeSet::singleton).collect())
    }

    pub fn node_count(&self) -> usize {
        self.part_of.len()
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn parts(&self) -> &[NodeSet] {
        &self.parts
    }

    pub fn part(&self, i: usize) -> &NodeSet {
        &self.parts[i]
    }

    /// Index of the part holding `v` (the surjection onto parts).
    pub fn part_of(&self, v: usize) -> usize {
        self.part_of[v]
    }

    pub fn labels(&self) -> &[usize] {
        &self.part_of
    }

    /// Position in the refinement lattice counted from the top: `{V}` is level 0.
    pub fn level(&self) -> usize {
        self.parts.len() - 1
    }

    fn same_size(&self, other: &Partition) -> Result<(), CoarseningError> {
        if self.node_count() != other.node_count() {
            return Err(CoarseningError::DimensionMismatch {
                expected: self.node_count(),
                found: other.node_count(),
            });
        }
        Ok(())
    }

    /// True iff every part of `self` lies inside some part of `other`.
    pub fn refines(&self, other: &Partition) -> Result<bool, CoarseningError> {
        self.same_size(other)?;
        Ok(self.refines_unchecked(other))
    }

    pub(crate) fn refines_unchecked(&self, other: &Partition) -> bool {
        self.parts.iter().all(|part| {
            let target = other.part_of[part.min().expect("non-empty part")];
            part.iter().all(|v| other.part_of[v] == target)
        })
    }

    /// Non-empty pairwise intersections of parts.
    pub fn meet(&self, other: &Partition) -> Result<Partition, CoarseningError> {
        self.same_size(other)?;
        let keys: Vec<(usize, usize)> = (0..self.node_count())
            .map(|v| (self.part_of[v], other.part_of[v]))
            .collect();
        Ok(Partition::from_keys(&keys))
    }

    /// Coarsest common coarsening in the full partition lattice (transitive
    /// closure of part overlaps).
    pub fn join(&self, other: &Partition) -> Result<Partition, CoarseningError> {
        self.same_size(other)?;
        let mut uf = UnionFind::new(self.node_count());
        for p in self.parts.iter().chain(other.parts.iter()) {
            let first = p.min().expect("non-empty part");
            for v in p.iter() {
                uf.union(first, v);
            }
        }
        Ok(uf.into_partition())
    }

    /// Merges the given parts into one.
    pub fn merge(&self, which: &[usize]) -> Partition {
        let mut uf = UnionFind::new(self.node_count());
        for p in &self.parts {
            let first = p.min().expect("non-empty part");
            for v in p.iter() {
                uf.union(first, v);
            }
        }
        if let Some((&head, rest)) = which.split_first() {
            let anchor = self.part(head).min().expect("non-empty part");
            for &i in rest {
                uf.union(anchor, self.part(i).min().expect("non-empty part"));
            }
        }
        uf.into_partition()
    }
}

impl TryFrom<Vec<Vec<usize>>> for Partition {
    type Error = CoarseningError;

    fn try_from(raw: Vec<Vec<usize>>) -> Result<Self, Self::Error> {
        let d = raw.iter().map(Vec::len).sum();
        let parts = raw
            .iter()
            .map(|ids| NodeSet::from_external(ids))
            .collect::<Result<Vec<_>, _>>()?;
        Partition::from_parts(d, parts)
    }
}

impl From<Partition> for Vec<Vec<usize>> {
    fn from(p: Partition) -> Self {
        p.parts.iter().map(NodeSet::to_external).collect()
    }
}

impl fmt::Display for Partition {
    /// `1|2|34` style; parts are comma separated inside when ids exceed 9.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sep = if self.node_count() > 9 { "," } else { "" };
        let text = self
            .parts
            .iter()
            .map(|p| p.iter().map(|v| (v + 1).to_string()).collect::<Vec<_>>().join(sep))
            .collect::<Vec<_>>()
            .join("|");
        f.write_str(&text)
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller id as root
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }

    fn into_partition(mut self) -> Partition {
        let roots: Vec<usize> = (0..self.parent.len()).map(|v| self.find(v)).collect();
        Partition::from_keys(&roots)
    }
}

/// A valid coarsening: a partition together with its acyclic quotient edges
/// (pairs of part indices).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "CoarseningJson", into = "CoarseningJson")]
pub struct Coarsening {
    partition: Partition,
    edges: BTreeSet<(usize, usize)>,
}

/// File form: `{"partition": [[...], ...], "edges": [[i, j], ...]}`, with
/// 1-based node ids and 1-based part indices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoarseningJson {
    pub partition: Vec<Vec<usize>>,
    pub edges: Vec<[usize; 2]>,
}

impl TryFrom<CoarseningJson> for Coarsening {
    type Error = CoarseningError;

    fn try_from(raw: CoarseningJson) -> Result<Self, Self::Error> {
        let partition = Partition::try_from(raw.partition)?;
        let k = partition.len();
        let mut edges = BTreeSet::new();
        for [i, j] in raw.edges {
            if i == 0 || j == 0 || i > k || j > k || i == j {
                return Err(CoarseningError::NotAPartition(format!("bad part edge [{i}, {j}]")));
            }
            edges.insert((i - 1, j - 1));
        }
        Coarsening::from_parts_and_edges(partition, edges)
    }
}

impl From<Coarsening> for CoarseningJson {
    fn from(c: Coarsening) -> Self {
        CoarseningJson {
            edges: c.edges.iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
            partition: c.partition.into(),
        }
    }
}

impl Coarsening {
    /// Builds a coarsening from explicit edges, checking only acyclicity of
    /// the quotient (no source graph is consulted).
    pub fn from_parts_and_edges(
        partition: Partition,
        edges: BTreeSet<(usize, usize)>,
    ) -> Result<Self, CoarseningError> {
        let adj = adjacency(partition.len(), &edges);
        if let Some(cycle) = find_cycle(&adj) {
            return Err(CoarseningError::Cyclic {
                cycle: cycle.into_iter().map(|i| partition.part(i).clone()).collect(),
            });
        }
        Ok(Coarsening { partition, edges })
    }

    /// `{V}` with no edges.
    pub fn trivial(d: usize) -> Self {
        Coarsening {
            partition: Partition::trivial(d),
            edges: BTreeSet::new(),
        }
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.partition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partition.is_empty()
    }

    /// The quotient as a DAG whose nodes are part indices.
    pub fn to_dag(&self) -> Dag {
        Dag::new(self.partition.len(), self.edges.iter().copied()).expect("coarsening edges are acyclic")
    }

    /// Parent parts of part `i`.
    pub fn parents_of(&self, i: usize) -> Vec<usize> {
        self.edges.iter().filter(|&&(_, j)| j == i).map(|&(u, _)| u).collect()
    }

    pub fn children_of(&self, i: usize) -> Vec<usize> {
        self.edges.iter().filter(|&&(u, _)| u == i).map(|&(_, j)| j).collect()
    }

    /// Whether these edges are exactly the ones `g` induces on this partition.
    pub fn is_coarsening_of(&self, g: &Dag) -> bool {
        g.node_count() == self.partition.node_count()
            && quotient_edges(g, &self.partition).map(|e| e == self.edges).unwrap_or(false)
    }
}

impl fmt::Display for Coarsening {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.partition)?;
        if !self.edges.is_empty() {
            let edges: Vec<String> = self
                .edges
                .iter()
                .map(|&(i, j)| format!("{}->{}", self.partition.part(i), self.partition.part(j)))
                .collect();
            write!(f, " [{}]", edges.join(", "))?;
        }
        Ok(())
    }
}

pub(crate) fn adjacency(k: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); k];
    for &(i, j) in edges {
        adj[i].push(j);
    }
    adj
}

/// Quotient edge set of `g` under `p`, whether or not it is acyclic.
pub fn quotient_edges(g: &Dag, p: &Partition) -> Result<BTreeSet<(usize, usize)>, CoarseningError> {
    if p.node_count() != g.node_count() {
        return Err(CoarseningError::DimensionMismatch {
            expected: g.node_count(),
            found: p.node_count(),
        });
    }
    Ok(g.edges()
        .map(|(u, v)| (p.part_of(u), p.part_of(v)))
        .filter(|(a, b)| a != b)
        .collect())
}

/// Coarsening induced by `p` on `g`; a cyclic quotient yields
/// [`CoarseningError::Cyclic`] carrying one witness cycle.
pub fn induce(g: &Dag, p: &Partition) -> Result<Coarsening, CoarseningError> {
    let edges = quotient_edges(g, p)?;
    Coarsening::from_parts_and_edges(p.clone(), edges)
}

fn require_coarsening(g: &Dag, c: &Coarsening) -> Result<(), CoarseningError> {
    if c.is_coarsening_of(g) {
        Ok(())
    } else {
        Err(CoarseningError::NotACoarsening)
    }
}

/// Finest common refinement of two valid coarsenings, re-induced from `g`.
pub fn meet(g: &Dag, c1: &Coarsening, c2: &Coarsening) -> Result<Coarsening, CoarseningError> {
    require_coarsening(g, c1)?;
    require_coarsening(g, c2)?;
    induce(g, &c1.partition.meet(&c2.partition)?)
}

/// Least valid coarsening above both inputs: partition-lattice join, then
/// repeated merging of quotient cycles until the quotient is acyclic.
pub fn join(g: &Dag, c1: &Coarsening, c2: &Coarsening) -> Result<Coarsening, CoarseningError> {
    require_coarsening(g, c1)?;
    require_coarsening(g, c2)?;
    acyclic_closure(g, c1.partition.join(&c2.partition)?)
}

/// Smallest coarsening of `p` whose quotient on `g` is acyclic.
pub fn acyclic_closure(g: &Dag, mut p: Partition) -> Result<Coarsening, CoarseningError> {
    loop {
        match induce(g, &p) {
            Ok(c) => return Ok(c),
            Err(CoarseningError::Cyclic { cycle }) => {
                let idx: Vec<usize> = cycle
                    .iter()
                    .map(|part| p.part_of(part.min().expect("non-empty part")))
                    .collect();
                p = p.merge(&idx);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Nodes grouped by equal intervention signature (the set of interventions
/// whose targets are ancestors of the node). Entries with empty targets are
/// ignored.
pub fn interventional_coarsening(g: &Dag, interventions: &[NodeSet]) -> Result<Coarsening, CoarseningError> {
    let signatures = (0..g.node_count())
        .map(|v| g.intervened_ancestors(v, interventions))
        .collect::<Result<Vec<_>, _>>()?;
    induce(g, &Partition::from_keys(&signatures))
}

/// Nodes grouped by equal sets of maximal (source) ancestors.
pub fn marginal_coarsening(g: &Dag) -> Result<Coarsening, CoarseningError> {
    let keys = (0..g.node_count())
        .map(|v| g.maximal_ancestors(v))
        .collect::<Result<Vec<_>, _>>()?;
    induce(g, &Partition::from_keys(&keys))
}
