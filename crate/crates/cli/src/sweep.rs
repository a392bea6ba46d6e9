use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use coarse_causal::metrics::{ari, coarsened_edge_metrics, mle_score, select_best, ScoredCandidate};
use coarse_causal::pipeline::learn;
use coarse_causal::scm::{experiment_suite, ExperimentParams, GraphFamily};
use coarse_causal::{interventional_coarsening, TestConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::SweepConfig;
use crate::plot::{line_plot, summarize};

pub const RESULTS_FILE: &str = "results.csv";
pub const SELECTION_FILE: &str = "selection.csv";
pub const FAILURES_FILE: &str = "failures.csv";
pub const CONFIG_ECHO_FILE: &str = "config.json";

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub d: usize,
    pub density: f64,
    pub family: GraphFamily,
    pub iota: usize,
    pub n: usize,
    pub alpha_ref: f64,
    pub alpha_edge: f64,
    pub ari: f64,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    pub score: Option<f64>,
    pub runtime_ms: f64,
    pub parts: usize,
    pub true_parts: usize,
    pub trace: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelectionRecord {
    pub seed: u64,
    pub d: usize,
    pub density: f64,
    pub family: GraphFamily,
    pub iota: usize,
    pub n: usize,
    pub alpha_ref: f64,
    pub alpha_edge: f64,
    pub ari: f64,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    pub score: f64,
    pub best_ari: f64,
    pub ari_gap: f64,
    pub candidates: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct FailureRecord {
    pub seed: u64,
    pub d: usize,
    pub density: f64,
    pub family: GraphFamily,
    pub iota: usize,
    pub n: usize,
    pub alpha_ref: Option<f64>,
    pub alpha_edge: Option<f64>,
    pub stage: String,
    pub error: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotAxis {
    N,
    D,
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub select: bool,
    pub plot: Option<PlotAxis>,
    pub traces: bool,
    pub jobs: Option<usize>,
}

#[derive(Debug, Default)]
pub struct SweepOutcome {
    pub rows: Vec<RunRecord>,
    pub selections: Vec<SelectionRecord>,
    pub failures: Vec<FailureRecord>,
}

#[derive(Debug, Default)]
struct CellOutput {
    rows: Vec<RunRecord>,
    selection: Option<SelectionRecord>,
    failures: Vec<FailureRecord>,
}

fn failure(p: &ExperimentParams, seed: u64, config: Option<&TestConfig>, stage: &str, error: String) -> FailureRecord {
    FailureRecord {
        seed,
        d: p.d,
        density: p.density,
        family: p.family,
        iota: p.iota,
        n: p.n,
        alpha_ref: config.map(|c| c.alpha_ref),
        alpha_edge: config.map(|c| c.alpha_edge),
        stage: stage.into(),
        error,
    }
}

fn trace_name(p: &ExperimentParams, seed: u64, c: &TestConfig) -> String {
    format!(
        "traces/{}-d{}-p{}-i{}-s{}-n{}-a{}-{}.jsonl",
        p.family, p.d, p.density, p.iota, seed, p.n, c.alpha_ref, c.alpha_edge
    )
}

fn run_cell(p: &ExperimentParams, seed: u64, configs: &[TestConfig], opts: &SweepOptions, out_dir: &Path) -> CellOutput {
    let mut out = CellOutput::default();
    let prepared = experiment_suite(p, seed)
        .map_err(|e| e.to_string())
        .and_then(|e| {
            let truth = interventional_coarsening(&e.graph, &e.intervention_targets()).map_err(|err| err.to_string())?;
            Ok((e, truth))
        });
    let (e, truth) = match prepared {
        Ok(x) => x,
        Err(msg) => {
            out.failures = configs.iter().map(|c| failure(p, seed, Some(c), "generate", msg.clone())).collect();
            return out;
        }
    };
    let (standardized, _) = e.data.standardized();
    let mut candidates = Vec::new();
    for config in configs {
        let start = Instant::now();
        let learned = learn(&e.data, config);
        let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        let learned = match learned {
            Ok(l) => l,
            Err(err) => {
                out.failures.push(failure(p, seed, Some(config), "learn", err.to_string()));
                continue;
            }
        };
        let metrics = ari(learned.coarsening.partition(), truth.partition())
            .and_then(|a| Ok((a, coarsened_edge_metrics(&learned.coarsening, &e.graph)?)));
        let (a, m) = match metrics {
            Ok(x) => x,
            Err(err) => {
                out.failures.push(failure(p, seed, Some(config), "eval", err.to_string()));
                continue;
            }
        };
        let score = match mle_score(&learned.coarsening, &standardized, &learned.descendants) {
            Ok(s) => Some(s),
            Err(err) => {
                out.failures.push(failure(p, seed, Some(config), "score", err.to_string()));
                None
            }
        };
        let trace = if opts.traces {
            let name = trace_name(p, seed, config);
            match fs::write(out_dir.join(&name), learned.trace.to_json_lines()) {
                Ok(()) => Some(name),
                Err(err) => {
                    out.failures.push(failure(p, seed, Some(config), "trace", err.to_string()));
                    None
                }
            }
        } else {
            None
        };
        if let Some(score) = score {
            candidates.push((
                out.rows.len(),
                ScoredCandidate {
                    config: *config,
                    coarsening: learned.coarsening.clone(),
                    score,
                },
            ));
        }
        out.rows.push(RunRecord {
            seed,
            d: p.d,
            density: p.density,
            family: p.family,
            iota: p.iota,
            n: p.n,
            alpha_ref: config.alpha_ref,
            alpha_edge: config.alpha_edge,
            ari: a,
            precision: m.precision,
            recall: m.recall,
            f: m.f_score,
            score,
            runtime_ms,
            parts: learned.coarsening.len(),
            true_parts: truth.len(),
            trace,
        });
    }
    if opts.select {
        let scored: Vec<ScoredCandidate> = candidates.iter().map(|(_, c)| c.clone()).collect();
        match select_best(&scored) {
            Some(best) => {
                let i = scored.iter().position(|c| std::ptr::eq(c, best)).expect("from the same slice");
                let row = &out.rows[candidates[i].0];
                let best_ari = out.rows.iter().map(|r| r.ari).fold(f64::NEG_INFINITY, f64::max);
                out.selection = Some(SelectionRecord {
                    seed,
                    d: p.d,
                    density: p.density,
                    family: p.family,
                    iota: p.iota,
                    n: p.n,
                    alpha_ref: row.alpha_ref,
                    alpha_edge: row.alpha_edge,
                    ari: row.ari,
                    precision: row.precision,
                    recall: row.recall,
                    f: row.f,
                    score: best.score,
                    best_ari,
                    ari_gap: best_ari - row.ari,
                    candidates: scored.len(),
                });
            }
            None => out.failures.push(failure(p, seed, None, "select", "no grid cell produced a score".into())),
        }
    }
    out
}

/// Runs every (data cell × threshold) combination and collects the records
/// in cell order.
pub fn run(config: &SweepConfig, opts: &SweepOptions) -> anyhow::Result<SweepOutcome> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    if opts.traces {
        let traces = dir.join("traces");
        fs::create_dir_all(&traces).with_context(|| format!("creating {}", traces.display()))?;
    }
    let cells = config.data_cells();
    let configs = config.test_configs();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = opts.jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool.build().context("starting the worker pool")?;
    let outputs: Vec<CellOutput> = pool.install(|| {
        cells
            .par_iter()
            .map(|(p, seed)| run_cell(p, *seed, &configs, opts, dir))
            .collect()
    });
    let mut outcome = SweepOutcome::default();
    for o in outputs {
        outcome.rows.extend(o.rows);
        outcome.selections.extend(o.selection);
        outcome.failures.extend(o.failures);
    }
    Ok(outcome)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(!rows.is_empty())
        .from_path(path)
        .with_context(|| format!("writing {}", path.display()))?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r).with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub const RUN_HEADER: &[&str] = &[
    "seed", "d", "density", "family", "iota", "n", "alpha_ref", "alpha_edge", "ari", "precision", "recall", "f", "score",
    "runtime_ms", "parts", "true_parts", "trace",
];
pub const SELECTION_HEADER: &[&str] = &[
    "seed", "d", "density", "family", "iota", "n", "alpha_ref", "alpha_edge", "ari", "precision", "recall", "f", "score",
    "best_ari", "ari_gap", "candidates",
];
pub const FAILURE_HEADER: &[&str] = &[
    "seed", "d", "density", "family", "iota", "n", "alpha_ref", "alpha_edge", "stage", "error",
];

/// Series label from the dimensions that actually vary, excluding the x axis.
#[derive(Clone, Copy)]
struct SeriesKey {
    family: GraphFamily,
    d: usize,
    density: f64,
    iota: usize,
    n: usize,
    alpha: Option<(f64, f64)>,
}

fn labels(keys: &[SeriesKey], axis: PlotAxis) -> Vec<String> {
    let fields: Vec<Vec<String>> = keys
        .iter()
        .map(|k| {
            let mut v = vec![format!("{}", k.family), format!("d={}", k.d), format!("p={}", k.density), format!("ι={}", k.iota)];
            if axis == PlotAxis::D {
                v.push(format!("n={}", k.n));
            }
            if let Some((r, e)) = k.alpha {
                v.push(format!("α={r}/{e}"));
            }
            v
        })
        .collect();
    let width = fields.first().map_or(0, Vec::len);
    let varying: Vec<usize> = (0..width)
        .filter(|&i| fields.iter().map(|f| &f[i]).collect::<BTreeSet<_>>().len() > 1)
        .collect();
    fields
        .into_iter()
        .map(|f| {
            let s: Vec<&str> = varying.iter().map(|&i| f[i].as_str()).collect();
            if s.is_empty() { "all".to_string() } else { s.join(", ") }
        })
        .collect()
}

type Metric<R> = (&'static str, &'static str, fn(&R) -> f64);

fn plot_group<R>(
    dir: &Path,
    prefix: &str,
    records: &[R],
    axis: PlotAxis,
    key: impl Fn(&R) -> SeriesKey,
    metrics: &[Metric<R>],
) -> anyhow::Result<Vec<PathBuf>> {
    let xname = match axis {
        PlotAxis::N => "n",
        PlotAxis::D => "d",
    };
    // group records by series, preserving first appearance
    let mut groups: Vec<(SeriesKey, Vec<&R>)> = Vec::new();
    for r in records {
        let k = key(r);
        let same = |g: &SeriesKey| {
            g.family == k.family
                && g.density == k.density
                && g.iota == k.iota
                && g.alpha == k.alpha
                && (axis == PlotAxis::N || g.n == k.n)
                && (axis == PlotAxis::D || g.d == k.d)
        };
        match groups.iter_mut().find(|(g, _)| same(g)) {
            Some((_, v)) => v.push(r),
            None => groups.push((k, vec![r])),
        }
    }
    let keys: Vec<SeriesKey> = groups.iter().map(|(k, _)| *k).collect();
    let names = labels(&keys, axis);
    let mut written = Vec::new();
    for (metric, ylabel, value) in metrics {
        let series: Vec<(String, _)> = groups
            .iter()
            .zip(&names)
            .map(|((_, rows), name)| {
                let pts: Vec<(f64, f64)> = rows
                    .iter()
                    .map(|r| {
                        let k = key(r);
                        let x = match axis {
                            PlotAxis::N => k.n as f64,
                            PlotAxis::D => k.d as f64,
                        };
                        (x, value(r))
                    })
                    .collect();
                (name.clone(), summarize(&pts))
            })
            .collect();
        let path = dir.join(format!("{prefix}{metric}_vs_{xname}.svg"));
        let title = format!("{prefix}{ylabel} vs {xname} (median, IQR)");
        fs::write(&path, line_plot(&title, xname, ylabel, &series)).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

/// ARI, F-score and runtime plots, plus the selected-candidate plots when
/// there are selections.
pub fn write_plots(dir: &Path, outcome: &SweepOutcome, axis: PlotAxis) -> anyhow::Result<Vec<PathBuf>> {
    let run_metrics: [Metric<RunRecord>; 3] = [
        ("ari", "ARI", |r| r.ari),
        ("f", "F-score", |r| r.f),
        ("runtime", "runtime (ms)", |r| r.runtime_ms),
    ];
    let mut written = plot_group(
        dir,
        "",
        &outcome.rows,
        axis,
        |r| SeriesKey {
            family: r.family,
            d: r.d,
            density: r.density,
            iota: r.iota,
            n: r.n,
            alpha: Some((r.alpha_ref, r.alpha_edge)),
        },
        &run_metrics,
    )?;
    if !outcome.selections.is_empty() {
        let sel_metrics: [Metric<SelectionRecord>; 2] = [("ari", "ARI", |r| r.ari), ("f", "F-score", |r| r.f)];
        written.extend(plot_group(
            dir,
            "selected_",
            &outcome.selections,
            axis,
            |r| SeriesKey {
                family: r.family,
                d: r.d,
                density: r.density,
                iota: r.iota,
                n: r.n,
                alpha: None,
            },
            &sel_metrics,
        )?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{SweepFile, SweepOverrides};

    fn small(dir: &Path) -> SweepConfig {
        let file: SweepFile = serde_json::from_str(r#"{"d": 5, "density": 0.4, "iota": 2, "n": [50, 200], "seeds": [1, 2], "alpha_grid": [[0.05, 0.05], [0.3, 0.001]]}"#).unwrap();
        SweepConfig::resolve(
            file,
            SweepOverrides {
                output_dir: Some(dir.to_path_buf()),
                ..Default::default()
            },
            0,
        )
        .unwrap()
    }

    #[test]
    fn rows_cover_the_cross_product_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let config = small(dir.path());
        let opts = SweepOptions {
            select: true,
            plot: None,
            traces: false,
            jobs: Some(2),
        };
        let out = run(&config, &opts).unwrap();
        let learn_failures = out.failures.iter().filter(|f| f.stage != "score" && f.stage != "select").count();
        assert_eq!(out.rows.len() + learn_failures, 2 * 2 * 2);
        assert_eq!(out.selections.len(), 4);
        let order: Vec<(u64, usize)> = out.rows.iter().map(|r| (r.seed, r.n)).collect();
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(order, sorted);
        for s in &out.selections {
            assert!(s.ari_gap >= 0.0 && s.candidates <= 2);
        }
        // deterministic apart from timing
        let again = run(&config, &opts).unwrap();
        let strip = |o: &SweepOutcome| o.rows.iter().map(|r| (r.ari, r.f, r.score.map(f64::to_bits), r.parts)).collect::<Vec<_>>();
        assert_eq!(strip(&out), strip(&again));
    }

    #[test]
    fn labels_only_mention_varying_fields() {
        let k = |d, alpha| SeriesKey {
            family: GraphFamily::Er,
            d,
            density: 0.2,
            iota: 5,
            n: 100,
            alpha: Some(alpha),
        };
        let names = labels(&[k(10, (0.05, 0.05)), k(20, (0.05, 0.05))], PlotAxis::N);
        assert_eq!(names, vec!["d=10", "d=20"]);
        let names = labels(&[k(10, (0.05, 0.05))], PlotAxis::N);
        assert_eq!(names, vec!["all"]);
    }
}
