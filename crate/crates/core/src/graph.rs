//! Fine-grained DAGs and the reachability and separation primitives built on
//! them.
//!
//! Nodes are dense indices `0..d` inside the library. File formats (JSON and
//! DOT) use 1-based ids; the conversion happens only in the serde and DOT
//! helpers of this module.

use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Errors raised while building or querying a [`Dag`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("node {node} out of range for a graph on {d} nodes")]
    NodeOutOfRange { node: usize, d: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(usize, usize),
    #[error("edge set contains a directed cycle through {0:?}")]
    Cycle(Vec<usize>),
    #[error("node sets passed to d-separation must be pairwise disjoint")]
    OverlappingSets,
    #[error("graph must have at least one node")]
    Empty,
    #[error("malformed graph description: {0}")]
    Parse(String),
}

/// A sorted set of node indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeSet(Vec<usize>);

impl NodeSet {
    pub fn new(nodes: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = nodes.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        NodeSet(v)
    }

    pub fn empty() -> Self {
        NodeSet(Vec::new())
    }

    pub fn singleton(v: usize) -> Self {
        NodeSet(vec![v])
    }

    /// The full node set `0..d`.
    pub fn full(d: usize) -> Self {
        NodeSet((0..d).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn min(&self) -> Option<usize> {
        self.0.first().copied()
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        NodeSet::new(self.iter().chain(other.iter()))
    }

    pub fn intersection(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.iter().filter(|&v| other.contains(v)).collect())
    }

    pub fn difference(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.iter().filter(|&v| !other.contains(v)).collect())
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.iter().all(|v| other.contains(v))
    }

    pub fn is_disjoint(&self, other: &NodeSet) -> bool {
        self.iter().all(|v| !other.contains(v))
    }

    /// 1-based ids, as written to files.
    pub fn to_external(&self) -> Vec<usize> {
        self.iter().map(|v| v + 1).collect()
    }

    /// Parses 1-based ids; rejects 0.
    pub fn from_external(ids: &[usize]) -> Result<NodeSet, GraphError> {
        ids.iter()
            .map(|&id| id.checked_sub(1).ok_or(GraphError::Parse("node ids are 1-based".into())))
            .collect::<Result<Vec<_>, _>>()
            .map(NodeSet::new)
    }
}

impl Serialize for NodeSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_external().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for NodeSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let ids = Vec::<usize>::deserialize(deserializer)?;
        NodeSet::from_external(&ids).map_err(serde::de::Error::custom)
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        NodeSet::new(iter)
    }
}

impl From<Vec<usize>> for NodeSet {
    fn from(v: Vec<usize>) -> Self {
        NodeSet::new(v)
    }
}

impl<'a> IntoIterator for &'a NodeSet {
    type Item = &'a usize;
    type IntoIter = std::slice::Iter<'a, usize>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", v + 1)?;
        }
        write!(f, "}}")
    }
}

/// Directed acyclic graph over nodes `0..d`.
///
/// Acyclicity, range and duplicate checks happen in [`Dag::new`]; a constructed
/// value is immutable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct Dag {
    d: usize,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    edge_count: usize,
}

/// On-disk form: `{"d": <int>, "edges": [[u, v], ...]}` with 1-based ids.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphJson {
    pub d: usize,
    pub edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphJson> for Dag {
    type Error = GraphError;

    fn try_from(g: GraphJson) -> Result<Self, Self::Error> {
        let mut edges = Vec::with_capacity(g.edges.len());
        for [u, v] in g.edges {
            if u == 0 || v == 0 {
                return Err(GraphError::Parse("node ids are 1-based".into()));
            }
            edges.push((u - 1, v - 1));
        }
        Dag::new(g.d, edges)
    }
}

impl From<Dag> for GraphJson {
    fn from(g: Dag) -> Self {
        GraphJson {
            d: g.d,
            edges: g.edges().map(|(u, v)| [u + 1, v + 1]).collect(),
        }
    }
}

impl Dag {
    pub fn new(d: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        if d == 0 {
            return Err(GraphError::Empty);
        }
        let mut parents = vec![Vec::new(); d];
        let mut children = vec![Vec::new(); d];
        let mut seen = BTreeSet::new();
        for (u, v) in edges {
            for node in [u, v] {
                if node >= d {
                    return Err(GraphError::NodeOutOfRange { node, d });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            if !seen.insert((u, v)) {
                return Err(GraphError::DuplicateEdge(u, v));
            }
            children[u].push(v);
            parents[v].push(u);
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }
        if let Some(cycle) = find_cycle(&children) {
            return Err(GraphError::Cycle(cycle));
        }
        Ok(Dag {
            d,
            parents,
            children,
            edge_count: seen.len(),
        })
    }

    /// Graph on `d` nodes with no edges.
    pub fn empty(d: usize) -> Result<Self, GraphError> {
        Dag::new(d, std::iter::empty())
    }

    pub fn node_count(&self) -> usize {
        self.d
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(u, ch)| ch.iter().map(move |&v| (u, v)))
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.d && self.children[u].binary_search(&v).is_ok()
    }

    pub fn parents_of(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children_of(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn nodes(&self) -> NodeSet {
        NodeSet::full(self.d)
    }

    fn check(&self, s: &NodeSet) -> Result<(), GraphError> {
        match s.max() {
            Some(node) if node >= self.d => Err(GraphError::NodeOutOfRange { node, d: self.d }),
            _ => Ok(()),
        }
    }

    fn check_node(&self, v: usize) -> Result<(), GraphError> {
        if v >= self.d {
            Err(GraphError::NodeOutOfRange { node: v, d: self.d })
        } else {
            Ok(())
        }
    }

    /// All nodes with a directed path into `s`, including `s` itself.
    pub fn ancestors(&self, s: &NodeSet) -> Result<NodeSet, GraphError> {
        self.check(s)?;
        Ok(reach(&self.parents, s.iter()))
    }

    /// All nodes reachable from `s`, including `s` itself.
    pub fn descendants(&self, s: &NodeSet) -> Result<NodeSet, GraphError> {
        self.check(s)?;
        Ok(reach(&self.children, s.iter()))
    }

    /// Union of the parent sets of `s`; may overlap `s`.
    pub fn parents(&self, s: &NodeSet) -> Result<NodeSet, GraphError> {
        self.check(s)?;
        Ok(s.iter().flat_map(|v| self.parents[v].iter().copied()).collect())
    }

    /// Union of the child sets of `s`; may overlap `s`.
    pub fn children(&self, s: &NodeSet) -> Result<NodeSet, GraphError> {
        self.check(s)?;
        Ok(s.iter().flat_map(|v| self.children[v].iter().copied()).collect())
    }

    /// Kahn's algorithm, always releasing the smallest available id first.
    pub fn topological_order(&self) -> Vec<usize> {
        topological_sort(&self.children).expect("Dag invariant: acyclic")
    }

    /// Source nodes among the ancestors of `v`.
    pub fn maximal_ancestors(&self, v: usize) -> Result<NodeSet, GraphError> {
        self.check_node(v)?;
        let an = reach(&self.parents, std::iter::once(v));
        Ok(an.iter().filter(|&w| self.parents[w].is_empty()).collect())
    }

    /// Indices of the interventions whose targets intersect the ancestors of
    /// `v`. Entries with empty targets (the observational setting) never
    /// appear in the result.
    pub fn intervened_ancestors(&self, v: usize, interventions: &[NodeSet]) -> Result<Vec<usize>, GraphError> {
        self.check_node(v)?;
        for targets in interventions {
            self.check(targets)?;
        }
        let an = reach(&self.parents, std::iter::once(v));
        Ok(interventions
            .iter()
            .enumerate()
            .filter(|(_, t)| !t.is_disjoint(&an))
            .map(|(i, _)| i)
            .collect())
    }

    /// d-separation of `a` and `b` given `c`, via the moralized ancestral graph.
    pub fn d_separated(&self, a: &NodeSet, b: &NodeSet, c: &NodeSet) -> Result<bool, GraphError> {
        self.check(a)?;
        self.check(b)?;
        self.check(c)?;
        if !a.is_disjoint(b) || !a.is_disjoint(c) || !b.is_disjoint(c) {
            return Err(GraphError::OverlappingSets);
        }
        if a.is_empty() || b.is_empty() {
            return Ok(true);
        }
        let seeds = a.union(b).union(c);
        let anc = reach(&self.parents, seeds.iter());
        let mut in_anc = vec![false; self.d];
        for v in anc.iter() {
            in_anc[v] = true;
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.d];
        for v in anc.iter() {
            let pa = &self.parents[v];
            for (i, &p) in pa.iter().enumerate() {
                adj[v].push(p);
                adj[p].push(v);
                for &q in &pa[i + 1..] {
                    adj[p].push(q);
                    adj[q].push(p);
                }
            }
        }
        let mut blocked = vec![false; self.d];
        for v in c.iter() {
            blocked[v] = true;
        }
        let mut target = vec![false; self.d];
        for v in b.iter() {
            target[v] = true;
        }
        let mut seen = vec![false; self.d];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for v in a.iter() {
            seen[v] = true;
            queue.push_back(v);
        }
        while let Some(u) = queue.pop_front() {
            if target[u] {
                return Ok(false);
            }
            for &w in &adj[u] {
                if in_anc[w] && !blocked[w] && !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        Ok(true)
    }

    /// Number of edges on the longest directed path.
    pub fn longest_path_edges(&self) -> usize {
        let mut depth = vec![0usize; self.d];
        for v in self.topological_order() {
            for &p in &self.parents[v] {
                depth[v] = depth[v].max(depth[p] + 1);
            }
        }
        depth.into_iter().max().unwrap_or(0)
    }

    /// Descendant set of every node, indexed by node.
    pub fn descendant_sets(&self) -> Vec<NodeSet> {
        (0..self.d).map(|v| reach(&self.children, std::iter::once(v))).collect()
    }

    /// Adjacency-list DOT with 1-based node names.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph G {\n");
        for v in 0..self.d {
            out.push_str(&format!("  {};\n", v + 1));
        }
        for (u, v) in self.edges() {
            out.push_str(&format!("  {} -> {};\n", u + 1, v + 1));
        }
        out.push_str("}\n");
        out
    }

    /// Parses the subset of DOT emitted by [`Dag::to_dot`]: numeric node
    /// statements and `u -> v` edge statements, optionally chained.
    pub fn from_dot(src: &str) -> Result<Dag, GraphError> {
        let body = match (src.find('{'), src.rfind('}')) {
            (Some(s), Some(e)) if s < e => &src[s + 1..e],
            _ => return Err(GraphError::Parse("missing braces".into())),
        };
        let parse_id = |tok: &str| -> Result<usize, GraphError> {
            let tok = tok.trim().trim_matches('"');
            let tok = tok.split('[').next().unwrap_or("").trim();
            match tok.parse::<usize>() {
                Ok(0) | Err(_) => Err(GraphError::Parse(format!("bad node id `{tok}`"))),
                Ok(id) => Ok(id - 1),
            }
        };
        let mut d = 0;
        let mut edges = Vec::new();
        for stmt in body.split([';', '\n']) {
            let stmt = stmt.trim();
            if stmt.is_empty() || stmt.starts_with("//") || stmt.contains('=') && !stmt.contains("->") {
                continue;
            }
            let ids = stmt
                .split("->")
                .map(parse_id)
                .collect::<Result<Vec<_>, _>>()?;
            for &id in &ids {
                d = d.max(id + 1);
            }
            edges.extend(ids.windows(2).map(|w| (w[0], w[1])));
        }
        Dag::new(d, edges)
    }
}

/// Nodes reachable from `seeds` along `adj`, seeds included.
pub(crate) fn reach(adj: &[Vec<usize>], seeds: impl IntoIterator<Item = usize>) -> NodeSet {
    let mut seen = vec![false; adj.len()];
    let mut stack: Vec<usize> = Vec::new();
    for s in seeds {
        if !seen[s] {
            seen[s] = true;
            stack.push(s);
        }
    }
    while let Some(u) = stack.pop() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    NodeSet(seen.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i).collect())
}

/// Min-id Kahn ordering of an adjacency list; `None` when a cycle exists.
pub fn topological_sort(children: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = children.len();
    let mut indeg = vec![0usize; n];
    for ch in children {
        for &w in ch {
            indeg[w] += 1;
        }
    }
    let mut heap: BinaryHeap<Reverse<usize>> = (0..n).filter(|&v| indeg[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(u)) = heap.pop() {
        order.push(u);
        for &w in &children[u] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                heap.push(Reverse(w));
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Returns one directed cycle (as a node sequence, first node not repeated)
/// if the adjacency list has any.
pub fn find_cycle(children: &[Vec<usize>]) -> Option<Vec<usize>> {
    const WHITE: u8 = 0;
    const GREY: u8 = 1;
    const BLACK: u8 = 2;
    let n = children.len();
    let mut color = vec![WHITE; n];
    let mut parent = vec![usize::MAX; n];
    for root in 0..n {
        if color[root] != WHITE {
            continue;
        }
        // iterative DFS: (node, next child index)
        let mut stack = vec![(root, 0usize)];
        color[root] = GREY;
        while let Some(&mut (u, ref mut idx)) = stack.last_mut() {
            if *idx < children[u].len() {
                let w = children[u][*idx];
                *idx += 1;
                match color[w] {
                    WHITE => {
                        color[w] = GREY;
                        parent[w] = u;
                        stack.push((w, 0));
                    }
                    GREY => {
                        let mut cycle = vec![u];
                        let mut x = u;
                        while x != w {
                            x = parent[x];
                            cycle.push(x);
                        }
                        cycle.reverse();
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                color[u] = BLACK;
                stack.pop();
            }
        }
    }
    None
}
