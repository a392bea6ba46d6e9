//! On-disk formats: one CSV per environment plus a JSON manifest, and a
//! ground-truth JSON for synthetic experiments. Node ids in files are
//! 1-based.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coarsening::{interventional_coarsening, Coarsening, CoarseningError};
use crate::graph::{Dag, GraphError, NodeSet};
use crate::scm::{Experiment, ExperimentParams, Lganm, ScmError, SoftIntervention};
use crate::stats::{Environment, EnvironmentData, StatsError};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Stats {
        path: PathBuf,
        #[source]
        source: StatsError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl ToString) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| format_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_matrix_csv(path: &Path, x: &DMatrix<f64>) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let csv_err = |e: csv::Error| format_err(path, e);
    w.write_record((1..=x.ncols()).map(|j| j.to_string())).map_err(csv_err)?;
    let mut row = Vec::with_capacity(x.ncols());
    for i in 0..x.nrows() {
        row.clear();
        row.extend((0..x.ncols()).map(|j| x[(i, j)].to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a CSV with a header row; every other row must hold one number per
/// header column.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>, IoError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut r = csv::Reader::from_reader(std::io::BufReader::new(file));
    let d = r.headers().map_err(|e| format_err(path, e))?.len();
    if d == 0 {
        return Err(format_err(path, "empty header"));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| format_err(path, e))?;
        if rec.len() != d {
            return Err(format_err(path, format!("row {} has {} fields, expected {d}", i + 2, rec.len())));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| format_err(path, format!("row {}, column {}: {field:?} is not a number", i + 2, j + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, d, &values))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    #[serde(default)]
    pub targets: Option<NodeSet>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub observational: String,
    #[serde(default)]
    pub interventions: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Writes `observational.csv`, `env<k>.csv` and `manifest.json` into `dir`
/// and returns the manifest path.
pub fn write_environment_data(dir: &Path, data: &EnvironmentData) -> Result<PathBuf, IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let obs = "observational.csv".to_string();
    write_matrix_csv(&dir.join(&obs), data.observational())?;
    let mut interventions = Vec::new();
    for (k, env) in data.interventions().iter().enumerate() {
        let file = format!("env{}.csv", k + 1);
        write_matrix_csv(&dir.join(&file), &env.samples)?;
        interventions.push(ManifestEntry {
            file,
            targets: env.targets.clone(),
        });
    }
    let path = dir.join(MANIFEST_FILE);
    write_json(
        &path,
        &Manifest {
            observational: obs,
            interventions,
        },
    )?;
    Ok(path)
}

/// Loads a manifest; data file paths are relative to its directory.
pub fn read_environment_data(manifest_path: &Path) -> Result<EnvironmentData, IoError> {
    let manifest: Manifest = read_json(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let observational = read_matrix_csv(&base.join(&manifest.observational))?;
    let interventions = manifest
        .interventions
        .iter()
        .map(|e| {
            Ok(Environment {
                name: e.file.clone(),
                targets: e.targets.clone(),
                samples: read_matrix_csv(&base.join(&e.file))?,
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    EnvironmentData::new(observational, interventions).map_err(|source| IoError::Stats {
        path: manifest_path.to_path_buf(),
        source,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Everything needed to evaluate a learned coarsening of a synthetic data
/// set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: Option<ExperimentParams>,
    pub graph: Dag,
    #[serde(default)]
    pub weights: Vec<WeightedEdge>,
    #[serde(default)]
    pub noise_means: Vec<f64>,
    #[serde(default)]
    pub noise_variances: Vec<f64>,
    pub interventions: Vec<SoftIntervention>,
    pub coarsening: Coarsening,
}

impl GroundTruth {
    pub fn from_experiment(e: &Experiment) -> Result<Self, CoarseningError> {
        let coarsening = interventional_coarsening(&e.graph, &e.intervention_targets())?;
        Ok(GroundTruth {
            seed: Some(e.seed),
            params: Some(e.params.clone()),
            graph: e.graph.clone(),
            weights: e
                .graph
                .edges()
                .map(|(u, v)| WeightedEdge {
                    from: u + 1,
                    to: v + 1,
                    weight: e.model.weights()[(u, v)],
                })
                .collect(),
            noise_means: e.model.noise_means().to_vec(),
            noise_variances: e.model.noise_variances().to_vec(),
            interventions: e.interventions.clone(),
            coarsening,
        })
    }

    pub fn targets(&self) -> Vec<NodeSet> {
        self.interventions.iter().map(|iv| iv.targets.clone()).collect()
    }

    /// Rebuilds the model when the file carries its parameters.
    pub fn model(&self) -> Result<Option<Lganm>, ScmError> {
        let d = self.graph.node_count();
        if self.noise_means.len() != d || self.noise_variances.len() != d {
            return Ok(None);
        }
        let mut w = DMatrix::zeros(d, d);
        for e in &self.weights {
            if e.from == 0 || e.to == 0 || e.from > d || e.to > d {
                return Err(GraphError::NodeOutOfRange {
                    node: e.from.max(e.to),
                    d,
                }
                .into());
            }
            w[(e.from - 1, e.to - 1)] = e.weight;
        }
        Lganm::new(self.graph.clone(), w, self.noise_means.clone(), self.noise_variances.clone()).map(Some)
    }
}

/// Writes the environment files and `ground_truth.json` of an experiment.
pub fn write_experiment(dir: &Path, e: &Experiment) -> Result<PathBuf, IoError> {
    let manifest = write_environment_data(dir, &e.data)?;
    let truth = GroundTruth::from_experiment(e).map_err(|err| format_err(dir, err))?;
    write_json(&dir.join(GROUND_TRUTH_FILE), &truth)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{experiment_suite, GraphFamily};

    #[test]
    fn environment_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = experiment_suite(&ExperimentParams::new(GraphFamily::Er, 4, 0.5, 2, 20), 9).unwrap();
        let manifest = write_experiment(dir.path(), &e).unwrap();
        let back = read_environment_data(&manifest).unwrap();
        assert_eq!(back.observational(), e.data.observational());
        assert_eq!(back.interventions().len(), 2);
        assert_eq!(back.targets(), e.data.targets());
        for (a, b) in back.interventions().iter().zip(e.data.interventions()) {
            assert_eq!(a.samples, b.samples);
        }
        let truth: GroundTruth = read_json(&dir.path().join(GROUND_TRUTH_FILE)).unwrap();
        assert_eq!(truth.graph, e.graph);
        assert_eq!(truth.model().unwrap().unwrap(), e.model);
        let m: Manifest = read_json(&manifest).unwrap();
        assert_eq!(m.interventions[0].file, "env1.csv");
    }

    #[test]
    fn manifest_targets_are_one_based_and_optional() {
        let m: Manifest = serde_json::from_str(
            r#"{"observational": "o.csv", "interventions": [{"file": "a.csv", "targets": [2]}, {"file": "b.csv", "targets": null}, {"file": "c.csv"}]}"#,
        )
        .unwrap();
        assert_eq!(m.interventions[0].targets, Some(NodeSet::singleton(1)));
        assert_eq!(m.interventions[1].targets, None);
        assert_eq!(m.interventions[2].targets, None);
    }

    #[test]
    fn malformed_csv_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "1,2\n0.5,abc\n").unwrap();
        let err = read_matrix_csv(&p).unwrap_err().to_string();
        assert!(err.contains("x.csv") && err.contains("abc"), "{err}");
        fs::write(&p, "1,2\n0.5\n").unwrap();
        assert!(read_matrix_csv(&p).is_err());
        let missing = dir.path().join("nope.json");
        assert!(matches!(read_environment_data(&missing), Err(IoError::Io { .. })));
    }
}
