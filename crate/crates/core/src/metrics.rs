//! Partition and edge recovery metrics, the Gaussian likelihood score used
//! to pick thresholds without ground truth, and the grid selector.

use rayon::prelude::*;
use serde::Serialize;

use crate::coarsening::{quotient_edges, Coarsening, CoarseningError};
use crate::graph::Dag;
use crate::pipeline::{learn_standardized, PipelineError};
use crate::stats::{descendant_matrix, DescendantMatrix, EnvironmentData, StatsError, TestConfig};
use crate::Partition;

fn pairs(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Hubert–Arabie adjusted Rand index. When both partitions make the
/// expected and maximal index coincide (e.g. both trivial), the value is 1
/// for equal partitions and 0 otherwise.
pub fn ari(p1: &Partition, p2: &Partition) -> Result<f64, CoarseningError> {
    if p1.node_count() != p2.node_count() {
        return Err(CoarseningError::DimensionMismatch {
            expected: p1.node_count(),
            found: p2.node_count(),
        });
    }
    let (r, c) = (p1.len(), p2.len());
    let mut table = vec![0usize; r * c];
    for v in 0..p1.node_count() {
        table[p1.part_of(v) * c + p2.part_of(v)] += 1;
    }
    let index: f64 = table.iter().map(|&n| pairs(n)).sum();
    let a: f64 = p1.parts().iter().map(|p| pairs(p.len())).sum();
    let b: f64 = p2.parts().iter().map(|p| pairs(p.len())).sum();
    let total = pairs(p1.node_count());
    let expected = if total > 0.0 { a * b / total } else { 0.0 };
    let max = (a + b) / 2.0;
    if (max - expected).abs() < 1e-12 {
        return Ok(if p1 == p2 { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EdgeMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl EdgeMetrics {
    /// Precision is 1 for an empty prediction and recall is 1 for an empty
    /// truth.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f_score = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EdgeMetrics {
            precision,
            recall,
            f_score,
            tp,
            fp,
            fn_,
        }
    }
}

/// Compares the learned coarse edges with the quotient of the true graph
/// under the learned partition, which may be cyclic.
pub fn coarsened_edge_metrics(learned: &Coarsening, true_g: &Dag) -> Result<EdgeMetrics, CoarseningError> {
    let truth = quotient_edges(true_g, learned.partition())?;
    let tp = learned.edges().intersection(&truth).count();
    Ok(EdgeMetrics::from_counts(tp, learned.edges().len() - tp, truth.len() - tp))
}

/// Parents of every node in the fine DAG obtained by expanding `c`: all
/// pairs along coarse edges, and a complete DAG by node id within parts.
pub fn expansion_parents(c: &Coarsening) -> Vec<Vec<usize>> {
    let p = c.partition();
    let d = p.node_count();
    (0..d)
        .map(|v| {
            let pv = p.part_of(v);
            let mut pa: Vec<usize> = p.part(pv).iter().filter(|&u| u < v).collect();
            for q in c.parents_of(pv) {
                pa.extend(p.part(q).iter());
            }
            pa.sort_unstable();
            pa
        })
        .collect()
}

const VARIANCE_FLOOR: f64 = 1e-10;

/// Maximized Gaussian log-likelihood of the data under the expansion of
/// `c`, summed over environments and without additive constants.
///
/// Edge weights are shared and fitted by least squares on the pooled data,
/// each environment centered by its own means. Node `v` gets its own noise
/// variance in environment `k` when `m` flags it there; all other
/// environments share one pooled variance. With `K = (I - B) Ω⁻¹ (I - B)ᵀ`,
/// `ln det K = -Σ ln ω_v` and `tr(K Σ̂) = Σ s_v / ω_v`, where `s_v` is the
/// mean squared residual of `v`; each environment contributes
/// `n/2 · (ln det K - tr(K Σ̂))`.
pub fn mle_score(c: &Coarsening, data: &EnvironmentData, m: &DescendantMatrix) -> Result<f64, StatsError> {
    let d = data.d();
    if c.partition().node_count() != d {
        return Err(StatsError::DimensionMismatch {
            expected: d,
            found: c.partition().node_count(),
        });
    }
    if m.node_count() != d || m.intervention_count() != data.interventions().len() {
        return Err(StatsError::DimensionMismatch {
            expected: data.interventions().len(),
            found: m.intervention_count(),
        });
    }
    let envs: Vec<nalgebra::DMatrix<f64>> = data
        .matrices()
        .map(|x| {
            let mut x = x.clone();
            for mut col in x.column_iter_mut() {
                let mean = col.mean();
                col.add_scalar_mut(-mean);
            }
            x
        })
        .collect();
    // pooled scatter Σ_k X_kᵀ X_k
    let scatter = envs.iter().map(|x| x.transpose() * x).fold(nalgebra::DMatrix::zeros(d, d), |a, b| a + b);
    let degenerate: Vec<bool> = (0..d).map(|v| scatter[(v, v)] <= VARIANCE_FLOOR).collect();
    if degenerate.iter().all(|&x| x) {
        return Err(StatsError::Degenerate);
    }
    let parents = expansion_parents(c);
    let mut score = 0.0;
    for v in (0..d).filter(|&v| !degenerate[v]) {
        let pa: Vec<usize> = parents[v].iter().copied().filter(|&u| !degenerate[u]).collect();
        let beta = if pa.is_empty() {
            nalgebra::DVector::zeros(0)
        } else {
            let spp = scatter.select_rows(&pa).select_columns(&pa);
            let spv = scatter.select_rows(&pa).column(v).into_owned();
            match spp.clone().cholesky() {
                Some(ch) => ch.solve(&spv),
                None => {
                    log::warn!("singular parent scatter for node {}; using a pseudo-inverse", v + 1);
                    spp.pseudo_inverse(1e-12).expect("pseudo-inverse of a symmetric matrix") * spv
                }
            }
        };
        // residual sum of squares and size per environment
        let rss: Vec<(f64, usize)> = envs
            .iter()
            .map(|x| {
                let mut r = x.column(v).into_owned();
                for (b, &u) in beta.iter().zip(&pa) {
                    r.axpy(-b, &x.column(u), 1.0);
                }
                (r.norm_squared(), x.nrows())
            })
            .collect();
        let own = |k: usize| k > 0 && m.get(v, k - 1);
        let (shared_rss, shared_n) = rss
            .iter()
            .enumerate()
            .filter(|&(k, _)| !own(k))
            .fold((0.0, 0usize), |(s, n), (_, &(r, nk))| (s + r, n + nk));
        let shared = if shared_n > 0 { shared_rss / shared_n as f64 } else { 0.0 };
        for (k, &(r, nk)) in rss.iter().enumerate() {
            let s = r / nk as f64;
            let mut omega = if own(k) { s } else { shared };
            if omega < VARIANCE_FLOOR {
                log::warn!("noise variance of node {} floored", v + 1);
                omega = VARIANCE_FLOOR;
            }
            score += 0.5 * nk as f64 * (-omega.ln() - s / omega);
        }
    }
    Ok(score)
}

#[derive(Clone, Debug, Serialize)]
pub struct ScoredCandidate {
    pub config: TestConfig,
    pub coarsening: Coarsening,
    pub score: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridSelection {
    pub best: ScoredCandidate,
    /// Every successful cell in grid order.
    pub candidates: Vec<ScoredCandidate>,
    pub failures: Vec<(TestConfig, String)>,
}

/// Learns with every configuration in `grid` on standardized `data`,
/// scores each result and returns the best one by [`select_best`].
pub fn grid_select(grid: &[TestConfig], data: &EnvironmentData) -> Result<GridSelection, PipelineError> {
    if grid.is_empty() {
        return Err(PipelineError::Other("empty threshold grid".into()));
    }
    let pvalues = descendant_matrix(data, 0.5)?;
    let results: Vec<Result<ScoredCandidate, PipelineError>> = grid
        .par_iter()
        .map(|config| {
            let out = learn_standardized(data, config, Some(&pvalues))?;
            let score = mle_score(&out.coarsening, data, &out.descendants)?;
            Ok(ScoredCandidate {
                config: *config,
                coarsening: out.coarsening,
                score,
            })
        })
        .collect();
    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for (config, r) in grid.iter().zip(results) {
        match r {
            Ok(c) => candidates.push(c),
            Err(e) => {
                log::warn!("grid cell ({}, {}) failed: {e}", config.alpha_ref, config.alpha_edge);
                failures.push((*config, e.to_string()));
            }
        }
    }
    let best = select_best(&candidates)
        .cloned()
        .ok_or_else(|| {
            PipelineError::Other(format!(
                "all {} grid cells failed; first error: {}",
                grid.len(),
                failures.first().map(|f| f.1.as_str()).unwrap_or("")
            ))
        })?;
    Ok(GridSelection {
        best,
        candidates,
        failures,
    })
}

/// Highest score; ties go to fewer parts, then to the smaller `alpha_ref`,
/// then to the smaller `alpha_edge`.
pub fn select_best(candidates: &[ScoredCandidate]) -> Option<&ScoredCandidate> {
    candidates.iter().max_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(b.coarsening.len().cmp(&a.coarsening.len()))
            .then(b.config.alpha_ref.total_cmp(&a.config.alpha_ref))
            .then(b.config.alpha_edge.total_cmp(&a.config.alpha_edge))
    })
}

/// The `{a}²` grid of threshold pairs.
pub fn square_grid(alphas: &[f64]) -> Vec<TestConfig> {
    alphas
        .iter()
        .flat_map(|&r| {
            alphas.iter().map(move |&e| TestConfig {
                alpha_ref: r,
                alpha_edge: e,
                ..Default::default()
            })
        })
        .collect()
}
