use rayon::prelude::*;
use serde::Serialize;

use super::{welch_t_test, EnvironmentData, StatsError};
use crate::graph::{Dag, GraphError, NodeSet};

/// Node × intervention indicator of detected marginal shifts, with the
/// p-values it was thresholded from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DescendantMatrix {
    d: usize,
    e: usize,
    entries: Vec<bool>,
    pvalues: Vec<f64>,
    alpha: f64,
}

impl DescendantMatrix {
    /// Builds the matrix from p-values stored row-major (`d` rows, `e`
    /// columns).
    pub fn from_pvalues(d: usize, e: usize, pvalues: Vec<f64>, alpha: f64) -> Self {
        assert_eq!(pvalues.len(), d * e, "p-value matrix has the wrong size");
        let entries = pvalues.iter().map(|&p| p < alpha).collect();
        DescendantMatrix {
            d,
            e,
            entries,
            pvalues,
            alpha,
        }
    }

    /// Noiseless matrix: node `v` is flagged for intervention `k` exactly
    /// when a target of `k` is an ancestor of `v` (including `v`).
    pub fn from_graph(g: &Dag, interventions: &[NodeSet]) -> Result<Self, GraphError> {
        let d = g.node_count();
        let e = interventions.len();
        let mut pvalues = vec![1.0; d * e];
        for v in 0..d {
            for k in g.intervened_ancestors(v, interventions)? {
                pvalues[v * e + k] = 0.0;
            }
        }
        Ok(Self::from_pvalues(d, e, pvalues, 0.5))
    }

    pub fn node_count(&self) -> usize {
        self.d
    }

    pub fn intervention_count(&self) -> usize {
        self.e
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn row(&self, v: usize) -> &[bool] {
        &self.entries[v * self.e..(v + 1) * self.e]
    }

    pub fn get(&self, v: usize, k: usize) -> bool {
        self.entries[v * self.e + k]
    }

    pub fn pvalue(&self, v: usize, k: usize) -> f64 {
        self.pvalues[v * self.e + k]
    }

    /// Same p-values thresholded at a different level.
    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self::from_pvalues(self.d, self.e, self.pvalues.clone(), alpha)
    }

    /// Indices of the interventions flagged for `v`.
    pub fn signature(&self, v: usize) -> Vec<usize> {
        (0..self.e).filter(|&k| self.get(v, k)).collect()
    }
}

/// Welch-tests every column of every interventional environment against
/// the observational one.
pub fn descendant_matrix(data: &EnvironmentData, alpha_ref: f64) -> Result<DescendantMatrix, StatsError> {
    let d = data.d();
    let obs = data.observational();
    let envs = data.interventions();
    let e = envs.len();
    let pvalues = (0..d * e)
        .into_par_iter()
        .map(|idx| {
            let (v, k) = (idx / e, idx % e);
            welch_t_test(envs[k].samples.column(v).as_slice(), obs.column(v).as_slice())
        })
        .collect::<Result<Vec<f64>, StatsError>>()?;
    Ok(DescendantMatrix::from_pvalues(d, e, pvalues, alpha_ref))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Environment;
    use nalgebra::DMatrix;

    #[test]
    fn noiseless_matrix_matches_reachability() {
        let g = Dag::new(4, [(0, 2), (1, 2), (2, 3)]).unwrap();
        let ivs = [NodeSet::singleton(0), NodeSet::singleton(1)];
        let m = DescendantMatrix::from_graph(&g, &ivs).unwrap();
        assert_eq!(m.row(0), &[true, false]);
        assert_eq!(m.row(1), &[false, true]);
        assert_eq!(m.row(2), &[true, true]);
        assert_eq!(m.row(3), &[true, true]);
        for v in 0..4 {
            for k in 0..2 {
                assert_eq!(m.get(v, k), m.pvalue(v, k) < m.alpha());
            }
        }
        assert_eq!(m.signature(3), vec![0, 1]);
    }

    #[test]
    fn identical_environment_gives_empty_column() {
        let obs = DMatrix::from_fn(20, 3, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let data = EnvironmentData::new(
            obs.clone(),
            vec![Environment {
                name: "copy".into(),
                targets: None,
                samples: obs,
            }],
        )
        .unwrap();
        let m = descendant_matrix(&data, 0.05).unwrap();
        assert!((0..3).all(|v| !m.get(v, 0) && m.pvalue(v, 0) == 1.0));
    }

    #[test]
    fn rethresholding() {
        let m = DescendantMatrix::from_pvalues(1, 3, vec![0.001, 0.04, 0.2], 0.05);
        assert_eq!(m.row(0), &[true, true, false]);
        assert_eq!(m.with_alpha(0.01).row(0), &[true, false, false]);
        assert_eq!(m.with_alpha(0.3).row(0), &[true, true, true]);
    }
}
