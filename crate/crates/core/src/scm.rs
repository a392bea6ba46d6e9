//! Random DAGs, linear Gaussian additive-noise models and soft shift
//! interventions for synthetic experiments.

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::graph::{Dag, GraphError, NodeSet};
use crate::stats::{Environment, EnvironmentData, StatsError};

#[derive(Debug, thiserror::Error)]
pub enum ScmError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFamily {
    /// Erdős–Rényi.
    Er,
    /// Scale-free (Barabási–Albert).
    Sf,
}

impl std::fmt::Display for GraphFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GraphFamily::Er => "er",
            GraphFamily::Sf => "sf",
        })
    }
}

impl std::str::FromStr for GraphFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "er" => Ok(GraphFamily::Er),
            "sf" | "ba" => Ok(GraphFamily::Sf),
            other => Err(format!("unknown graph family {other:?} (expected er or sf)")),
        }
    }
}

fn check_density(density: f64) -> Result<(), ScmError> {
    if (0.0..=1.0).contains(&density) {
        Ok(())
    } else {
        Err(ScmError::InvalidParameter(format!("density {density} is not in [0, 1]")))
    }
}

/// Erdős–Rényi DAG: nodes are placed in a uniformly random order and each
/// forward pair becomes an edge with probability `density`.
pub fn sample_er_dag<R: Rng + ?Sized>(d: usize, density: f64, rng: &mut R) -> Result<Dag, ScmError> {
    check_density(density)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            if rng.random_bool(density) {
                edges.push((order[i], order[j]));
            }
        }
    }
    Ok(Dag::new(d, edges)?)
}

/// Attachment parameter for a target edge density: the implied average
/// degree is `density · (d - 1)` and `m = round(max(deg / 2, 1))`, capped at
/// `d - 1`.
pub fn ba_attachment(d: usize, density: f64) -> usize {
    let deg = density * (d.saturating_sub(1)) as f64;
    let m = (deg / 2.0).max(1.0).round() as usize;
    if m >= d {
        log::warn!("attachment parameter {m} clamped to {}", d - 1);
        d - 1
    } else {
        m
    }
}

/// Barabási–Albert DAG: preferential attachment grown from a star on
/// `m + 1` nodes, then oriented along a uniformly random node order.
pub fn sample_ba_dag<R: Rng + ?Sized>(d: usize, density: f64, rng: &mut R) -> Result<Dag, ScmError> {
    check_density(density)?;
    if d < 2 {
        return Err(ScmError::InvalidParameter(format!("scale-free graphs need d >= 2, got {d}")));
    }
    let m = ba_attachment(d, density);
    let mut undirected: Vec<(usize, usize)> = (1..=m).map(|v| (0, v)).collect();
    // every endpoint once per incident edge
    let mut repeated: Vec<usize> = undirected.iter().flat_map(|&(a, b)| [a, b]).collect();
    for source in m + 1..d {
        let mut targets: Vec<usize> = Vec::with_capacity(m);
        while targets.len() < m {
            let t = repeated[rng.random_range(0..repeated.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            undirected.push((t, source));
            repeated.push(t);
            repeated.push(source);
        }
    }
    let mut rank: Vec<usize> = (0..d).collect();
    rank.shuffle(rng);
    let edges = undirected
        .into_iter()
        .map(|(a, b)| if rank[a] < rank[b] { (a, b) } else { (b, a) });
    Ok(Dag::new(d, edges)?)
}

pub fn sample_dag<R: Rng + ?Sized>(family: GraphFamily, d: usize, density: f64, rng: &mut R) -> Result<Dag, ScmError> {
    match family {
        GraphFamily::Er => sample_er_dag(d, density, rng),
        GraphFamily::Sf => sample_ba_dag(d, density, rng),
    }
}

/// Soft intervention: the noise of each target gets its mean shifted and
/// its variance replaced, while parent dependence is kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftIntervention {
    pub targets: NodeSet,
    pub mean_shift: f64,
    pub variance: f64,
}

impl SoftIntervention {
    pub const DEFAULT_SHIFT: f64 = 2.0;
    pub const DEFAULT_VARIANCE: f64 = 1.0;

    pub fn new(targets: NodeSet, mean_shift: f64, variance: f64) -> Result<Self, ScmError> {
        if targets.is_empty() {
            return Err(ScmError::InvalidParameter("intervention without targets".into()));
        }
        if !(variance > 0.0 && variance.is_finite() && mean_shift.is_finite()) {
            return Err(ScmError::InvalidParameter(format!(
                "intervention needs finite shift and positive variance, got {mean_shift} and {variance}"
            )));
        }
        Ok(SoftIntervention {
            targets,
            mean_shift,
            variance,
        })
    }

    /// Single-target shift by 2 with unit variance.
    pub fn shift(target: usize) -> Self {
        SoftIntervention {
            targets: NodeSet::singleton(target),
            mean_shift: Self::DEFAULT_SHIFT,
            variance: Self::DEFAULT_VARIANCE,
        }
    }
}

/// Linear Gaussian additive-noise model `X = Bᵀ X + ε`, where `B[(u, v)]`
/// is the weight of edge `u → v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lganm {
    graph: Dag,
    weights: DMatrix<f64>,
    noise_means: Vec<f64>,
    noise_variances: Vec<f64>,
}

impl Lganm {
    pub fn new(graph: Dag, weights: DMatrix<f64>, noise_means: Vec<f64>, noise_variances: Vec<f64>) -> Result<Self, ScmError> {
        let d = graph.node_count();
        if weights.shape() != (d, d) || noise_means.len() != d || noise_variances.len() != d {
            return Err(ScmError::InvalidParameter("parameter shapes do not match the graph".into()));
        }
        for u in 0..d {
            for v in 0..d {
                if weights[(u, v)] != 0.0 && !graph.has_edge(u, v) {
                    return Err(ScmError::InvalidParameter(format!(
                        "weight on non-edge {} -> {}",
                        u + 1,
                        v + 1
                    )));
                }
            }
        }
        if let Some(v) = noise_variances.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(ScmError::InvalidParameter(format!("noise variance of node {} must be positive", v + 1)));
        }
        Ok(Lganm {
            graph,
            weights,
            noise_means,
            noise_variances,
        })
    }

    pub fn graph(&self) -> &Dag {
        &self.graph
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn noise_means(&self) -> &[f64] {
        &self.noise_means
    }

    pub fn noise_variances(&self) -> &[f64] {
        &self.noise_variances
    }

    fn noise(&self, iv: Option<&SoftIntervention>) -> (Vec<f64>, Vec<f64>) {
        let mut means = self.noise_means.clone();
        let mut vars = self.noise_variances.clone();
        if let Some(iv) = iv {
            for t in iv.targets.iter() {
                means[t] += iv.mean_shift;
                vars[t] = iv.variance;
            }
        }
        (means, vars)
    }

    /// `(I - Bᵀ)⁻¹`, which maps noise to variables.
    fn mixing(&self) -> DMatrix<f64> {
        let d = self.graph.node_count();
        (DMatrix::identity(d, d) - self.weights.transpose())
            .try_inverse()
            .expect("I - B is unit triangular up to permutation")
    }

    pub fn mean(&self, iv: Option<&SoftIntervention>) -> DVector<f64> {
        let (m, _) = self.noise(iv);
        self.mixing() * DVector::from_vec(m)
    }

    pub fn covariance(&self, iv: Option<&SoftIntervention>) -> DMatrix<f64> {
        let (_, s) = self.noise(iv);
        let a = self.mixing();
        &a * DMatrix::from_diagonal(&DVector::from_vec(s)) * a.transpose()
    }
}

/// Edge weights uniform on `±[0.5, 2]` with a fair random sign, noise means
/// uniform on `[-2, 2]`, noise variances uniform on `[0.5, 2]`.
pub fn sample_lganm<R: Rng + ?Sized>(g: &Dag, rng: &mut R) -> Lganm {
    let d = g.node_count();
    let mut weights = DMatrix::zeros(d, d);
    for (u, v) in g.edges() {
        let w: f64 = rng.random_range(0.5..=2.0);
        weights[(u, v)] = if rng.random_bool(0.5) { w } else { -w };
    }
    let noise_means = (0..d).map(|_| rng.random_range(-2.0..=2.0)).collect();
    let noise_variances = (0..d).map(|_| rng.random_range(0.5..=2.0)).collect();
    Lganm {
        graph: g.clone(),
        weights,
        noise_means,
        noise_variances,
    }
}

/// `n` ancestral samples as an `n × d` matrix.
pub fn sample_environment<R: Rng + ?Sized>(model: &Lganm, iv: Option<&SoftIntervention>, n: usize, rng: &mut R) -> DMatrix<f64> {
    let d = model.graph.node_count();
    let (means, vars) = model.noise(iv);
    let mut x = DMatrix::zeros(n, d);
    for v in model.graph.topological_order() {
        let sd = vars[v].sqrt();
        let mut col: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                means[v] + sd * z
            })
            .collect();
        for &u in model.graph.parents_of(v) {
            let w = model.weights[(u, v)];
            for (c, xu) in col.iter_mut().zip(x.column(u).iter()) {
                *c += w * xu;
            }
        }
        x.set_column(v, &DVector::from_vec(col));
    }
    x
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub family: GraphFamily,
    pub d: usize,
    pub density: f64,
    pub iota: usize,
    pub n: usize,
    #[serde(default = "default_shift")]
    pub mean_shift: f64,
    #[serde(default = "default_variance")]
    pub intervention_variance: f64,
}

fn default_shift() -> f64 {
    SoftIntervention::DEFAULT_SHIFT
}

fn default_variance() -> f64 {
    SoftIntervention::DEFAULT_VARIANCE
}

impl ExperimentParams {
    pub fn new(family: GraphFamily, d: usize, density: f64, iota: usize, n: usize) -> Self {
        ExperimentParams {
            family,
            d,
            density,
            iota,
            n,
            mean_shift: default_shift(),
            intervention_variance: default_variance(),
        }
    }
}

/// A full synthetic experiment. `data` holds the raw samples; learners
/// standardize it themselves.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub params: ExperimentParams,
    pub seed: u64,
    pub graph: Dag,
    pub model: Lganm,
    pub interventions: Vec<SoftIntervention>,
    pub data: EnvironmentData,
}

impl Experiment {
    pub fn intervention_targets(&self) -> Vec<NodeSet> {
        self.interventions.iter().map(|iv| iv.targets.clone()).collect()
    }
}

const STREAM_GRAPH: u64 = 0;
const STREAM_MODEL: u64 = 1;
const STREAM_TARGETS: u64 = 2;
const STREAM_ENVIRONMENTS: u64 = 10;

/// Random generator for one named part of an experiment. Sub-streams are
/// independent, so e.g. changing `n` leaves the graph untouched.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Graph, model, `iota` single-target interventions on distinct random
/// targets, and `n` samples from the observational setting and from each
/// intervention.
pub fn experiment_suite(params: &ExperimentParams, seed: u64) -> Result<Experiment, ScmError> {
    let ExperimentParams { family, d, density, iota, n, .. } = *params;
    if d == 0 {
        return Err(ScmError::InvalidParameter("d must be positive".into()));
    }
    if iota > d {
        return Err(ScmError::InvalidParameter(format!("iota = {iota} exceeds d = {d}")));
    }
    let graph = sample_dag(family, d, density, &mut substream(seed, STREAM_GRAPH))?;
    let model = sample_lganm(&graph, &mut substream(seed, STREAM_MODEL));
    let mut targets = index::sample(&mut substream(seed, STREAM_TARGETS), d, iota).into_vec();
    targets.sort_unstable();
    let interventions = targets
        .into_iter()
        .map(|t| SoftIntervention::new(NodeSet::singleton(t), params.mean_shift, params.intervention_variance))
        .collect::<Result<Vec<_>, _>>()?;
    let observational = sample_environment(&model, None, n, &mut substream(seed, STREAM_ENVIRONMENTS));
    let environments = interventions
        .iter()
        .enumerate()
        .map(|(k, iv)| Environment {
            name: format!("env{}", k + 1),
            targets: Some(iv.targets.clone()),
            samples: sample_environment(&model, Some(iv), n, &mut substream(seed, STREAM_ENVIRONMENTS + 1 + k as u64)),
        })
        .collect();
    let data = EnvironmentData::new(observational, environments)?;
    Ok(Experiment {
        params: params.clone(),
        seed,
        graph,
        model,
        interventions,
        data,
    })
}
