mod config;
mod plot;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use coarse_causal::io::{read_environment_data, read_json, write_experiment, write_json, GroundTruth, GROUND_TRUTH_FILE};
use coarse_causal::lattice::{enumerate_valid_with_cap, is_distributive, lattice_to_dot, summarize, DEFAULT_ENUMERATION_CAP};
use coarse_causal::metrics::{ari, coarsened_edge_metrics};
use coarse_causal::pipeline::{learn, learn_exact};
use coarse_causal::scm::{experiment_suite, ExperimentParams, GraphFamily};
use coarse_causal::{Coarsening, Dag, TestConfig};
use serde::Serialize;

use config::{parse_alpha_pair, SweepConfig, SweepFile, SweepOverrides};
use sweep::{PlotAxis, SweepOptions};

const SEED_ENV: &str = "COARSE_CAUSAL_SEED";

#[derive(Parser)]
#[command(name = "coarse-causal", version, about = "Learn and evaluate causal coarsenings of DAGs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic data bundle: one CSV per environment, a manifest
    /// and the ground truth.
    Generate(GenerateArgs),
    /// Learn a coarsening from a data bundle.
    Learn(LearnArgs),
    /// Compare a learned coarsening with a ground truth.
    Eval(EvalArgs),
    /// Run generate, learn and eval over a grid of settings.
    Sweep(SweepArgs),
    /// Enumerate the valid coarsenings of a small graph.
    Lattice(LatticeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value = "er")]
    family: GraphFamily,
    #[arg(long, default_value_t = 10)]
    d: usize,
    /// Edge probability (er) or attachment density (sf).
    #[arg(long, default_value_t = 0.2)]
    density: f64,
    /// Number of single-node interventions.
    #[arg(long, default_value_t = 5)]
    iota: usize,
    /// Samples per environment.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    mean_shift: f64,
    #[arg(long, default_value_t = 1.0)]
    intervention_variance: f64,
}

#[derive(Args)]
struct LearnArgs {
    /// Manifest of the data bundle.
    manifest: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha_ref: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha_edge: f64,
    /// Where to write the coarsening JSON; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Write the split and edge-query trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Use exact oracles built from the ground truth instead of the data.
    #[arg(long)]
    oracle: bool,
    /// Ground truth for --oracle; defaults to the file next to the manifest.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Learned coarsening JSON.
    learned: PathBuf,
    /// Ground truth JSON.
    ground_truth: PathBuf,
    /// Where to write the metrics JSON; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Selection {
    Score,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    N,
    D,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    family: Option<Vec<GraphFamily>>,
    #[arg(long, value_delimiter = ',')]
    d: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    density: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    iota: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Threshold pairs `alpha_ref:alpha_edge`; a single number is used for both.
    #[arg(long, value_delimiter = ',', value_parser = parse_alpha_pair)]
    alpha: Option<Vec<(f64, f64)>>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    mean_shift: Option<f64>,
    #[arg(long)]
    intervention_variance: Option<f64>,
    /// Pick one threshold pair per data set by likelihood score.
    #[arg(long, value_enum)]
    select: Option<Selection>,
    /// Write median/IQR SVG plots against the given axis.
    #[arg(long, value_enum, num_args = 0..=1, default_missing_value = "n")]
    plot: Option<Axis>,
    /// Write one trace file per learn run.
    #[arg(long)]
    traces: bool,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LatticeFormat {
    Json,
    Dot,
}

#[derive(Args)]
struct LatticeArgs {
    /// Graph as JSON (`{"d": .., "edges": [[u, v], ..]}`) or DOT.
    graph: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: LatticeFormat,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Largest graph to enumerate.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    cap: usize,
    /// Also check distributivity (cubic in the lattice size).
    #[arg(long)]
    distributive: bool,
}

/// Error with its exit code: 1 for the learning pipeline, 2 for input,
/// output and configuration.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait Classify<T> {
    fn input(self) -> Result<T, Failure>;
    fn pipeline(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: 2, error: e.into() })
    }

    fn pipeline(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: 1, error: e.into() })
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())).input(),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), Failure> {
    match out {
        Some(path) => write_json(path, value).input(),
        None => {
            println!("{}", serde_json::to_string_pretty(value).input()?);
            Ok(())
        }
    }
}

fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let mut params = ExperimentParams::new(a.family, a.d, a.density, a.iota, a.n);
    params.mean_shift = a.mean_shift;
    params.intervention_variance = a.intervention_variance;
    let e = experiment_suite(&params, a.seed).input()?;
    let manifest = write_experiment(&a.out, &e).input()?;
    eprintln!("wrote {} environments, manifest {}", e.data.interventions().len() + 1, manifest.display());
    Ok(())
}

fn learn_cmd(a: LearnArgs) -> Result<(), Failure> {
    let (coarsening, trace) = if a.oracle {
        let path = a.ground_truth.clone().unwrap_or_else(|| {
            a.manifest.parent().unwrap_or(Path::new(".")).join(GROUND_TRUTH_FILE)
        });
        let truth: GroundTruth = read_json(&path).input()?;
        learn_exact(&truth.graph, &truth.targets()).pipeline()?
    } else {
        let config = TestConfig::new(a.alpha_ref, a.alpha_edge).input()?;
        let data = read_environment_data(&a.manifest).input()?;
        let out = learn(&data, &config).pipeline()?;
        (out.coarsening, out.trace)
    };
    if let Some(path) = &a.trace {
        emit(Some(path), &trace.to_json_lines())?;
    }
    emit_json(a.out.as_deref(), &coarsening)?;
    eprintln!("learned {coarsening}");
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    ari: f64,
    precision: f64,
    recall: f64,
    f_score: f64,
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    learned_parts: usize,
    true_parts: usize,
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    let learned: Coarsening = read_json(&a.learned).input()?;
    let truth: GroundTruth = read_json(&a.ground_truth).input()?;
    let (d_learned, d_true) = (learned.partition().node_count(), truth.graph.node_count());
    if d_learned != d_true {
        return Err(anyhow!(
            "{} covers {d_learned} nodes but {} has {d_true}",
            a.learned.display(),
            a.ground_truth.display()
        ))
        .input();
    }
    let score = ari(learned.partition(), truth.coarsening.partition()).input()?;
    let m = coarsened_edge_metrics(&learned, &truth.graph).input()?;
    let report = EvalReport {
        ari: score,
        precision: m.precision,
        recall: m.recall,
        f_score: m.f_score,
        tp: m.tp,
        fp: m.fp,
        fn_: m.fn_,
        learned_parts: learned.len(),
        true_parts: truth.coarsening.len(),
    };
    emit_json(a.out.as_deref(), &report)?;
    eprintln!(
        "ARI {:.3}, precision {:.3}, recall {:.3}, F {:.3} ({} learned parts, {} true parts)",
        report.ari, report.precision, report.recall, report.f_score, report.learned_parts, report.true_parts
    );
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<(), Failure> {
    let file = match &a.config {
        Some(path) => SweepFile::read(path).input()?,
        None => SweepFile::default(),
    };
    let seed_base = match std::env::var(SEED_ENV) {
        Ok(s) => s.trim().parse::<u64>().with_context(|| format!("{SEED_ENV}={s}")).input()?,
        Err(_) => 0,
    };
    let flags = SweepOverrides {
        family: a.family,
        d: a.d,
        density: a.density,
        iota: a.iota,
        n: a.n,
        seeds: a.seeds,
        alpha_grid: a.alpha,
        output_dir: a.out,
        mean_shift: a.mean_shift,
        intervention_variance: a.intervention_variance,
    };
    let config = SweepConfig::resolve(file, flags, seed_base).input()?;
    if a.jobs == Some(0) {
        return Err(anyhow!("--jobs must be positive")).input();
    }
    let opts = SweepOptions {
        select: a.select.is_some(),
        plot: a.plot.map(|x| match x {
            Axis::N => PlotAxis::N,
            Axis::D => PlotAxis::D,
        }),
        traces: a.traces,
        jobs: a.jobs,
    };
    let outcome = sweep::run(&config, &opts).input()?;
    let dir = &config.output_dir;
    write_json(&dir.join(sweep::CONFIG_ECHO_FILE), &config).input()?;
    sweep::write_csv(&dir.join(sweep::RESULTS_FILE), &outcome.rows, sweep::RUN_HEADER).input()?;
    sweep::write_csv(&dir.join(sweep::FAILURES_FILE), &outcome.failures, sweep::FAILURE_HEADER).input()?;
    if opts.select {
        sweep::write_csv(&dir.join(sweep::SELECTION_FILE), &outcome.selections, sweep::SELECTION_HEADER).input()?;
    }
    if let Some(axis) = opts.plot {
        sweep::write_plots(dir, &outcome, axis).input()?;
    }
    eprintln!(
        "{} runs, {} selections, {} failures; results in {}",
        outcome.rows.len(),
        outcome.selections.len(),
        outcome.failures.len(),
        dir.display()
    );
    if outcome.rows.is_empty() {
        return Err(anyhow!("every run failed; see {}", dir.join(sweep::FAILURES_FILE).display())).pipeline();
    }
    Ok(())
}

#[derive(Serialize)]
struct LatticeReport {
    summary: coarse_causal::lattice::LatticeSummary,
    longest_path_edges: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    distributive: Option<bool>,
    coarsenings: Vec<Coarsening>,
}

fn read_graph(path: &Path) -> Result<Dag, Failure> {
    if path.extension().is_some_and(|e| e == "dot" || e == "gv") {
        let src = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).input()?;
        Dag::from_dot(&src).with_context(|| format!("parsing {}", path.display())).input()
    } else {
        read_json(path).input()
    }
}

fn lattice(a: LatticeArgs) -> Result<(), Failure> {
    let g = read_graph(&a.graph)?;
    let mut valid = enumerate_valid_with_cap(&g, a.cap).input()?;
    // coarsest first
    valid.sort_by_key(|c| c.len());
    match a.format {
        LatticeFormat::Dot => emit(a.out.as_deref(), &lattice_to_dot(&valid)),
        LatticeFormat::Json => {
            let distributive = if a.distributive {
                Some(is_distributive(&valid).pipeline()?)
            } else {
                None
            };
            let report = LatticeReport {
                summary: summarize(&g, &valid),
                longest_path_edges: g.longest_path_edges(),
                distributive,
                coarsenings: valid,
            };
            emit_json(a.out.as_deref(), &report)
        }
    }
}

/// The error chain on one line, skipping causes already quoted by an outer
/// message.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let s = cause.to_string();
        if !msg.contains(&s) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&s);
        }
    }
    msg
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Learn(a) => learn_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Lattice(a) => lattice(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", describe(&f.error));
            ExitCode::from(f.code)
        }
    }
}
