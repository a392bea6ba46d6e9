use std::path::PathBuf;

use anyhow::{bail, Context};
use coarse_causal::scm::{ExperimentParams, GraphFamily};
use coarse_causal::TestConfig;
use serde::{Deserialize, Serialize};

/// A JSON field that may hold one value or a list of values.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> From<OneOrMany<T>> for Vec<T> {
    fn from(v: OneOrMany<T>) -> Self {
        match v {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(xs) => xs,
        }
    }
}

/// Sweep configuration as read from a file. Every field is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub family: Option<OneOrMany<GraphFamily>>,
    pub d: Option<OneOrMany<usize>>,
    pub density: Option<OneOrMany<f64>>,
    pub iota: Option<OneOrMany<usize>>,
    pub n: Option<OneOrMany<usize>>,
    pub seeds: Option<OneOrMany<u64>>,
    pub alpha_grid: Option<Vec<(f64, f64)>>,
    pub output_dir: Option<PathBuf>,
    pub mean_shift: Option<f64>,
    pub intervention_variance: Option<f64>,
}

impl SweepFile {
    pub fn read(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Values given on the command line; each one replaces the file's.
#[derive(Clone, Debug, Default)]
pub struct SweepOverrides {
    pub family: Option<Vec<GraphFamily>>,
    pub d: Option<Vec<usize>>,
    pub density: Option<Vec<f64>>,
    pub iota: Option<Vec<usize>>,
    pub n: Option<Vec<usize>>,
    pub seeds: Option<Vec<u64>>,
    pub alpha_grid: Option<Vec<(f64, f64)>>,
    pub output_dir: Option<PathBuf>,
    pub mean_shift: Option<f64>,
    pub intervention_variance: Option<f64>,
}

/// Fully resolved and validated sweep configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepConfig {
    pub family: Vec<GraphFamily>,
    pub d: Vec<usize>,
    pub density: Vec<f64>,
    pub iota: Vec<usize>,
    pub n: Vec<usize>,
    pub seeds: Vec<u64>,
    pub alpha_grid: Vec<(f64, f64)>,
    pub output_dir: PathBuf,
    pub mean_shift: f64,
    pub intervention_variance: f64,
}

pub const DEFAULT_SEED_COUNT: u64 = 10;

fn pick<T>(flag: Option<Vec<T>>, file: Option<OneOrMany<T>>) -> Option<Vec<T>> {
    flag.or(file.map(Vec::from))
}

impl SweepConfig {
    /// Flags over file over defaults. `seed_base` starts the default seed
    /// range when neither source lists seeds.
    pub fn resolve(file: SweepFile, flags: SweepOverrides, seed_base: u64) -> anyhow::Result<Self> {
        let config = SweepConfig {
            family: pick(flags.family, file.family).unwrap_or_else(|| vec![GraphFamily::Er]),
            d: pick(flags.d, file.d).unwrap_or_else(|| vec![10]),
            density: pick(flags.density, file.density).unwrap_or_else(|| vec![0.2]),
            iota: pick(flags.iota, file.iota).unwrap_or_else(|| vec![5]),
            n: pick(flags.n, file.n).unwrap_or_else(|| vec![100, 1_000, 10_000]),
            seeds: pick(flags.seeds, file.seeds).unwrap_or_else(|| (seed_base..seed_base + DEFAULT_SEED_COUNT).collect()),
            alpha_grid: flags.alpha_grid.or(file.alpha_grid).unwrap_or_else(|| vec![(0.05, 0.05)]),
            output_dir: flags.output_dir.or(file.output_dir).unwrap_or_else(|| PathBuf::from("sweep")),
            mean_shift: flags.mean_shift.or(file.mean_shift).unwrap_or(2.0),
            intervention_variance: flags.intervention_variance.or(file.intervention_variance).unwrap_or(1.0),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let non_empty = [
            ("family", self.family.is_empty()),
            ("d", self.d.is_empty()),
            ("density", self.density.is_empty()),
            ("iota", self.iota.is_empty()),
            ("n", self.n.is_empty()),
            ("seeds", self.seeds.is_empty()),
            ("alpha_grid", self.alpha_grid.is_empty()),
        ];
        if let Some((field, _)) = non_empty.iter().find(|(_, empty)| *empty) {
            bail!("config field `{field}` must not be empty");
        }
        if let Some(d) = self.d.iter().find(|&&d| d < 2) {
            bail!("config field `d`: {d} is below 2");
        }
        let min_d = *self.d.iter().min().expect("non-empty");
        if let Some(i) = self.iota.iter().find(|&&i| i > min_d) {
            bail!("config field `iota`: {i} exceeds d = {min_d}");
        }
        if let Some(p) = self.density.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            bail!("config field `density`: {p} is outside [0, 1]");
        }
        if let Some(n) = self.n.iter().find(|&&n| n < 3) {
            bail!("config field `n`: {n} is below 3");
        }
        for &(r, e) in &self.alpha_grid {
            TestConfig::new(r, e).with_context(|| format!("config field `alpha_grid`: ({r}, {e})"))?;
        }
        if self.intervention_variance.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            bail!("config field `intervention_variance` must be positive");
        }
        if !self.mean_shift.is_finite() {
            bail!("config field `mean_shift` must be finite");
        }
        Ok(())
    }

    /// Data cells in a fixed order: family, d, density, iota, seed, n.
    pub fn data_cells(&self) -> Vec<(ExperimentParams, u64)> {
        let mut cells = Vec::new();
        for &family in &self.family {
            for &d in &self.d {
                for &density in &self.density {
                    for &iota in &self.iota {
                        for &seed in &self.seeds {
                            for &n in &self.n {
                                let mut p = ExperimentParams::new(family, d, density, iota, n);
                                p.mean_shift = self.mean_shift;
                                p.intervention_variance = self.intervention_variance;
                                cells.push((p, seed));
                            }
                        }
                    }
                }
            }
        }
        cells
    }

    pub fn test_configs(&self) -> Vec<TestConfig> {
        self.alpha_grid
            .iter()
            .map(|&(r, e)| TestConfig::new(r, e).expect("validated"))
            .collect()
    }
}

/// Parses `r:e` threshold pairs; a single number `a` stands for `a:a`.
pub fn parse_alpha_pair(s: &str) -> Result<(f64, f64), String> {
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    match s.split_once(':') {
        Some((r, e)) => Ok((parse(r)?, parse(e)?)),
        None => {
            let a = parse(s)?;
            Ok((a, a))
        }
    }
}
