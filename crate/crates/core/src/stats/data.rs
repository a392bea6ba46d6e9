use nalgebra::DMatrix;

use super::StatsError;
use crate::graph::NodeSet;

/// Samples from one interventional setting. Targets are known only for
/// synthetic data and are never read by the learners.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    pub name: String,
    pub targets: Option<NodeSet>,
    pub samples: DMatrix<f64>,
}

/// An observational sample plus any number of interventional ones, each an
/// `n × d` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentData {
    d: usize,
    observational: DMatrix<f64>,
    interventions: Vec<Environment>,
}

/// Pooled column location and scale used by [`EnvironmentData::standardized`].
#[derive(Clone, Debug, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub constant_columns: Vec<usize>,
}

pub(crate) const MIN_ROWS: usize = 3;

impl EnvironmentData {
    pub fn new(observational: DMatrix<f64>, interventions: Vec<Environment>) -> Result<Self, StatsError> {
        let d = observational.ncols();
        let check = |m: &DMatrix<f64>, what: &str| -> Result<(), StatsError> {
            if m.ncols() != d {
                return Err(StatsError::DimensionMismatch {
                    expected: d,
                    found: m.ncols(),
                });
            }
            if m.nrows() < MIN_ROWS {
                return Err(StatsError::SampleTooSmall(format!(
                    "{what} has {} rows, need at least {MIN_ROWS}",
                    m.nrows()
                )));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(StatsError::NonFinite(what.to_string()));
            }
            Ok(())
        };
        if d == 0 {
            return Err(StatsError::SampleTooSmall("no columns".into()));
        }
        check(&observational, "observational environment")?;
        for env in &interventions {
            check(&env.samples, &format!("environment {}", env.name))?;
            if let Some(t) = &env.targets {
                if let Some(v) = t.iter().find(|&v| v >= d) {
                    return Err(StatsError::NodeOutOfRange { node: v, d });
                }
            }
        }
        Ok(EnvironmentData {
            d,
            observational,
            interventions,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn observational(&self) -> &DMatrix<f64> {
        &self.observational
    }

    pub fn interventions(&self) -> &[Environment] {
        &self.interventions
    }

    /// Known targets of every interventional environment, if all are known.
    pub fn targets(&self) -> Option<Vec<NodeSet>> {
        self.interventions.iter().map(|e| e.targets.clone()).collect()
    }

    /// All sample matrices, observational first.
    pub fn matrices(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        std::iter::once(&self.observational).chain(self.interventions.iter().map(|e| &e.samples))
    }

    pub fn total_rows(&self) -> usize {
        self.matrices().map(|m| m.nrows()).sum()
    }

    /// Centers and scales every column by its mean and standard deviation
    /// over all environments together, so that shifts between environments
    /// survive. Constant columns are centered only and reported.
    pub fn standardized(&self) -> (EnvironmentData, Standardization) {
        let n = self.total_rows() as f64;
        let mut means = vec![0.0; self.d];
        let mut scales = vec![1.0; self.d];
        let mut constant_columns = Vec::new();
        for j in 0..self.d {
            let mean = self.matrices().map(|m| m.column(j).sum()).sum::<f64>() / n;
            let ss: f64 = self
                .matrices()
                .map(|m| m.column(j).iter().map(|x| (x - mean) * (x - mean)).sum::<f64>())
                .sum();
            let sd = (ss / (n - 1.0)).sqrt();
            means[j] = mean;
            if sd > 1e-12 * mean.abs().max(1.0) {
                scales[j] = sd;
            } else {
                log::warn!("column {} is constant; its tests will report p = 1", j + 1);
                constant_columns.push(j);
            }
        }
        let apply = |m: &DMatrix<f64>| {
            let mut out = m.clone();
            for j in 0..self.d {
                let (mu, s) = (means[j], scales[j]);
                out.column_mut(j).apply(|x| *x = (*x - mu) / s);
            }
            out
        };
        let data = EnvironmentData {
            d: self.d,
            observational: apply(&self.observational),
            interventions: self
                .interventions
                .iter()
                .map(|e| Environment {
                    name: e.name.clone(),
                    targets: e.targets.clone(),
                    samples: apply(&e.samples),
                })
                .collect(),
        };
        (
            data,
            Standardization {
                means,
                scales,
                constant_columns,
            },
        )
    }
}
