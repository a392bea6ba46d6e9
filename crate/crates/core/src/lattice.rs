//! Enumeration of the coarsening lattice of small DAGs and order-theoretic
//! checks on it.

use std::collections::HashMap;

use serde::Serialize;

use crate::coarsening::{induce, Coarsening, CoarseningError, Partition};
use crate::graph::{Dag, NodeSet};

/// Default ceiling on `d` for exhaustive enumeration (Bell(10) = 115975).
pub const DEFAULT_ENUMERATION_CAP: usize = 10;

/// All set partitions of `0..d` in restricted-growth-string order.
pub fn partitions(d: usize) -> Partitions {
    Partitions {
        rgs: vec![0; d],
        max_prefix: vec![0; d],
        done: d == 0,
    }
}

pub struct Partitions {
    rgs: Vec<usize>,
    // max_prefix[i] = max(rgs[0..=i])
    max_prefix: Vec<usize>,
    done: bool,
}

impl Iterator for Partitions {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        if self.done {
            return None;
        }
        let current = Partition::from_keys(&self.rgs);
        let d = self.rgs.len();
        // advance: rightmost position that can still grow
        let mut i = d;
        loop {
            if i <= 1 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.rgs[i] <= self.max_prefix[i - 1] {
                self.rgs[i] += 1;
                self.max_prefix[i] = self.max_prefix[i - 1].max(self.rgs[i]);
                for j in i + 1..d {
                    self.rgs[j] = 0;
                    self.max_prefix[j] = self.max_prefix[i];
                }
                break;
            }
        }
        Some(current)
    }
}

/// Every partition of `0..d` whose induced quotient on `g` is acyclic, in
/// restricted-growth-string order.
pub fn enumerate_valid(g: &Dag) -> Result<Vec<Coarsening>, CoarseningError> {
    enumerate_valid_with_cap(g, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_valid_with_cap(g: &Dag, cap: usize) -> Result<Vec<Coarsening>, CoarseningError> {
    let d = g.node_count();
    if d > cap {
        return Err(CoarseningError::TooLarge { d, cap });
    }
    let mut out = Vec::new();
    for p in partitions(d) {
        match induce(g, &p) {
            Ok(c) => out.push(c),
            Err(CoarseningError::Cyclic { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Counts describing the lattice of one graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LatticeSummary {
    pub d: usize,
    pub total_partitions: usize,
    /// Partition counts per level; level `i` holds partitions into `i + 1` parts.
    pub partitions_per_level: Vec<usize>,
    pub valid_coarsenings: usize,
    pub valid_per_level: Vec<usize>,
}

pub fn summarize(g: &Dag, valid: &[Coarsening]) -> LatticeSummary {
    let d = g.node_count();
    let mut partitions_per_level = vec![0; d];
    let mut total = 0;
    for p in partitions(d) {
        partitions_per_level[p.level()] += 1;
        total += 1;
    }
    let mut valid_per_level = vec![0; d];
    for c in valid {
        valid_per_level[c.partition().level()] += 1;
    }
    LatticeSummary {
        d,
        total_partitions: total,
        partitions_per_level,
        valid_coarsenings: valid.len(),
        valid_per_level,
    }
}

/// Meet and join tables of a finite poset of partitions ordered by
/// refinement, when it is a lattice.
struct LatticeTables {
    meet: Vec<Vec<usize>>,
    join: Vec<Vec<usize>>,
}

fn lattice_tables(lattice: &[Coarsening]) -> Result<LatticeTables, CoarseningError> {
    let n = lattice.len();
    if n == 0 {
        return Err(CoarseningError::NotClosed);
    }
    let d = lattice[0].partition().node_count();
    if lattice.iter().any(|c| c.partition().node_count() != d) {
        return Err(CoarseningError::NotClosed);
    }
    let leq: Vec<Vec<bool>> = lattice
        .iter()
        .map(|a| lattice.iter().map(|b| a.partition().refines_unchecked(b.partition())).collect())
        .collect();
    let bound = |i: usize, j: usize, upper: bool| -> Result<usize, CoarseningError> {
        let rel = |a: usize, b: usize| if upper { leq[a][b] } else { leq[b][a] };
        let cands: Vec<usize> = (0..n).filter(|&k| rel(i, k) && rel(j, k)).collect();
        cands
            .iter()
            .copied()
            .find(|&k| cands.iter().all(|&o| rel(k, o)))
            .ok_or(CoarseningError::NotClosed)
    };
    let mut meet = vec![vec![0; n]; n];
    let mut join = vec![vec![0; n]; n];
    for i in 0..n {
        for j in i..n {
            let m = bound(i, j, false)?;
            let s = bound(i, j, true)?;
            meet[i][j] = m;
            meet[j][i] = m;
            join[i][j] = s;
            join[j][i] = s;
        }
    }
    Ok(LatticeTables { meet, join })
}

/// Whether `x ∧ (y ∨ z) = (x ∧ y) ∨ (x ∧ z)` for every triple, with meet and
/// join taken inside the given poset. Errors when the poset has a pair
/// without a greatest lower or least upper bound.
pub fn is_distributive(lattice: &[Coarsening]) -> Result<bool, CoarseningError> {
    let t = lattice_tables(lattice)?;
    let n = lattice.len();
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                let lhs = t.meet[x][t.join[y][z]];
                let rhs = t.join[t.meet[x][y]][t.meet[x][z]];
                if lhs != rhs {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Hasse diagram of the given coarsenings in DOT, coarsest at the top.
pub fn lattice_to_dot(lattice: &[Coarsening]) -> String {
    let n = lattice.len();
    let index: HashMap<&Partition, usize> = lattice.iter().enumerate().map(|(i, c)| (c.partition(), i)).collect();
    let mut out = String::from("digraph lattice {\n  rankdir=BT;\n  node [shape=box];\n");
    for (i, c) in lattice.iter().enumerate() {
        out.push_str(&format!("  n{i} [label=\"{}\"];\n", c.partition()));
    }
    for (i, a) in lattice.iter().enumerate() {
        // covers of a: strictly coarser elements with nothing strictly in between
        let above: Vec<usize> = (0..n)
            .filter(|&j| j != i && a.partition().refines_unchecked(lattice[j].partition()))
            .collect();
        for &j in &above {
            let covered = above.iter().all(|&k| {
                k == j || !lattice[k].partition().refines_unchecked(lattice[j].partition())
            });
            if covered {
                out.push_str(&format!("  n{} -> n{};\n", index[a.partition()], j));
            }
        }
    }
    out.push_str("}\n");
    out
}

/// Partitions with the given parts over `0..d`; convenience for tests and
/// examples.
pub fn partition_of(d: usize, parts: &[&[usize]]) -> Result<Partition, CoarseningError> {
    Partition::from_parts(d, parts.iter().map(|p| NodeSet::new(p.iter().copied())))
}
