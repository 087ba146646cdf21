//! `opg`: estimate grades from peer feedback, evaluate rankings, simulate
//! datasets and run experiments.
//!
//! Exit status is 0 on success, 1 for invalid input or arguments and 2 for
//! internal failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use opg_core::experiments::{self, Axis};
use opg_core::io::{self, EstimateFile, InputFormat};
use opg_core::metrics::{cardinal_errors, TargetSet};
use opg_core::synth::{self, GraderModel, SynthConfig};
use opg_core::{fit, Dataset64, FitConfig64, Method, OpgError};

#[derive(Parser)]
#[command(name = "opg", version, about = "Ordinal peer grading")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a dataset and write the estimate as JSON.
    Estimate(EstimateArgs),
    /// Print the error of a predicted ranking against one or more targets.
    Evaluate(EvaluateArgs),
    /// Write a synthetic dataset and its `<stem>.truth.json`.
    Simulate(SimulateArgs),
    /// Run an evaluation protocol and write its report as JSON.
    Experiment(ExperimentArgs),
}

#[derive(Args, Clone, Serialize)]
struct FitArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Alternating rounds of the reliability-aware (`+g`) methods.
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    /// Scores closer than this are reported as tied.
    #[arg(long, default_value_t = opg_core::ranking::DEFAULT_TIE_EPSILON)]
    tie_epsilon: f64,
}

impl FitArgs {
    fn config(&self) -> FitConfig64 {
        FitConfig64 { seed: self.seed, iterations: self.iterations, tie_epsilon: self.tie_epsilon, ..FitConfig64::default() }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Ordinal,
    Cardinal,
}

impl From<Format> for InputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Ordinal => InputFormat::Ordinal,
            Format::Cardinal => InputFormat::Cardinal,
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    model: Method,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Format,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted estimate (any JSON file with a `ranking`).
    #[arg(long)]
    input: PathBuf,
    /// Target ranking file; repeat for several targets.
    #[arg(long, required = true)]
    target: Vec<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 40)]
    items: usize,
    #[arg(long, default_value_t = 150)]
    graders: usize,
    #[arg(long, default_value_t = 7)]
    items_per_grader: usize,
    /// `mallows:<eta>`, `normal:<eta>[:<bias sd>]`, or `likert:<eta>[:<bias sd>]`
    /// for normal grades rounded to whole points.
    #[arg(long, default_value = "mallows:1.0", value_parser = parse_grader_model)]
    grader_model: GraderModel,
    /// Extra lazy graders, appended after the regular ones.
    #[arg(long, default_value_t = 0)]
    lazy_count: usize,
    /// Defaults to cardinal for `normal` and `likert` graders, ordinal otherwise.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Experiment {
    /// Bootstrap mean and spread of the error against the targets.
    Bootstrap,
    /// Agreement between rankings fitted on disjoint halves of the graders.
    SelfConsistency,
    /// Error as reviewers or items per reviewer are removed.
    Downsample,
    /// Share of added lazy graders among the least reliable ones, for the
    /// model and for the disagreement heuristic.
    Lazy,
    /// Change in error when lazy graders are added.
    Robustness,
    /// Wall-clock time per fit.
    Timing,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    experiment: Experiment,
    /// One or more comma-separated models.
    #[arg(long, value_delimiter = ',', required = true)]
    model: Vec<Method>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Format,
    #[arg(long)]
    target: Vec<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated lazy-grader counts.
    #[arg(long, value_delimiter = ',')]
    lazy_count: Vec<usize>,
    #[arg(long, value_parser = parse_axis)]
    axis: Option<Axis>,
    #[arg(long, value_delimiter = ',')]
    levels: Vec<usize>,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgs,
}

fn parse_grader_model(s: &str) -> Result<GraderModel, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |k: usize| parts.get(k).map(|p| p.parse::<f64>().map_err(|e| format!("`{p}`: {e}"))).transpose();
    match (parts[0], parts.len()) {
        ("mallows", 2) => Ok(GraderModel::Mallows { eta: num(1)?.unwrap() }),
        ("normal", 2 | 3) => Ok(GraderModel::CardinalNormal { eta: num(1)?.unwrap(), bias_sd: num(2)?.unwrap_or(0.0) }),
        ("likert", 2 | 3) => Ok(GraderModel::Likert { eta: num(1)?.unwrap(), bias_sd: num(2)?.unwrap_or(0.0) }),
        _ => Err("expected mallows:<eta>, normal:<eta>[:<bias sd>] or likert:<eta>[:<bias sd>]".into()),
    }
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    s.parse().map_err(|e: OpgError| e.to_string())
}

/// Twelve significant digits; floating-point dust prints as zero.
fn show(x: f64) -> String {
    let r = io::round_significant(x);
    format!("{:?}", if r.abs() < 1e-12 { 0.0 } else { r })
}

fn read_targets(paths: &[PathBuf]) -> opg_core::Result<TargetSet> {
    if paths.is_empty() {
        return Err(OpgError::InvalidParameter("at least one --target is required".into()));
    }
    TargetSet::new(paths.iter().map(|p| io::read_ranking_file(p).map(|f| f.ranking)).collect::<Result<_, _>>()?)
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> opg_core::Result<()> {
    io::write_atomic(path, io::to_json_string(value)?.as_bytes())
}

#[derive(Serialize)]
struct EstimateEcho<'a> {
    input: &'a Path,
    format: Format,
    fit: FitConfig64,
}

fn estimate(a: EstimateArgs) -> opg_core::Result<()> {
    let data: Dataset64 = io::read_dataset(&a.input, a.format.into())?;
    let cfg = a.fit.config();
    let est = fit(a.model, &data, &cfg)?;
    for note in &est.notes {
        log::info!("{note}");
    }
    let echo = EstimateEcho { input: &a.input, format: a.format, fit: cfg };
    write_json(&a.output, &EstimateFile::new(a.model.to_string(), a.fit.seed, echo, &est))
}

fn evaluate(a: EvaluateArgs) -> opg_core::Result<()> {
    let predicted = io::read_ranking_file(&a.input)?;
    let targets = read_targets(&a.target)?;
    println!("E_K {}", show(experiments::evaluate(&targets, &predicted.ranking)?));
    if let [only] = a.target.as_slice() {
        let target = io::read_ranking_file(only)?;
        if let (Some(p), Some(t)) = (&predicted.scores, &target.scores) {
            let (mae, rmse) = cardinal_errors(p, t)?;
            println!("MAE {}", show(mae));
            println!("RMSE {}", show(rmse));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TruthFile<'a> {
    config: &'a SynthConfig,
    ranking: &'a opg_core::WeakRanking,
    scores: &'a std::collections::BTreeMap<opg_core::ItemId, f64>,
    #[serde(skip_serializing_if = "std::collections::BTreeSet::is_empty")]
    lazy: &'a std::collections::BTreeSet<opg_core::GraderId>,
}

/// `dir/name.ext` -> `dir/name.truth.json`.
fn truth_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.truth.json"))
}

fn simulate(a: SimulateArgs) -> opg_core::Result<()> {
    let cfg = SynthConfig {
        n_items: a.items,
        n_graders: a.graders,
        items_per_grader: a.items_per_grader,
        grader_model: a.grader_model,
        n_lazy: a.lazy_count,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let format = a.format.unwrap_or(match a.grader_model {
        GraderModel::CardinalNormal { .. } | GraderModel::Likert { .. } => Format::Cardinal,
        GraderModel::Mallows { .. } => Format::Ordinal,
    });
    if matches!((format, a.grader_model), (Format::Cardinal, GraderModel::Mallows { .. })) {
        return Err(OpgError::InvalidParameter("mallows graders produce ordinal data only".into()));
    }
    let (data, truth) = synth::generate::<f64>(&cfg)?;
    io::write_dataset(&a.output, &data, format.into())?;
    let file = TruthFile { config: &cfg, ranking: &truth.ranking, scores: &truth.scores, lazy: &data.lazy };
    write_json(&truth_path(&a.output), &file)
}

fn experiment(a: ExperimentArgs) -> opg_core::Result<()> {
    use experiments::*;
    let data: Dataset64 = io::read_dataset(&a.input, a.format.into())?;
    let cfg = a.fit.config();
    let seed = a.fit.seed;
    let mut report = ExperimentReport {
        experiment: serde_json::to_value(a.experiment).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
        methods: a.model.clone(),
        seed,
        ..Default::default()
    };
    let single = || match a.model.as_slice() {
        [m] => Ok(*m),
        _ => Err(OpgError::InvalidParameter("this experiment takes exactly one --model".into())),
    };
    match a.experiment {
        Experiment::Bootstrap => {
            let targets = read_targets(&a.target)?;
            report.reps = a.reps.unwrap_or(DEFAULT_BOOTSTRAP_REPS);
            for &m in &a.model {
                report.ek.insert(m, bootstrap_ek(&data, m, &cfg, &targets, report.reps, seed)?);
            }
        }
        Experiment::SelfConsistency => {
            report.reps = a.reps.unwrap_or(DEFAULT_PARTITIONS);
            for &m in &a.model {
                report.ek.insert(m, self_consistency(&data, m, &cfg, report.reps, seed)?);
            }
        }
        Experiment::Downsample => {
            let targets = read_targets(&a.target)?;
            let axis = a.axis.ok_or_else(|| OpgError::InvalidParameter("--axis is required".into()))?;
            if a.levels.is_empty() {
                return Err(OpgError::InvalidParameter("--levels is required".into()));
            }
            report.reps = a.reps.unwrap_or(DEFAULT_DOWNSAMPLE_REPS);
            report.curve = downsample_curve(&data, single()?, &cfg, axis, &a.levels, report.reps, &targets, seed)?;
        }
        Experiment::Lazy => {
            let m = single()?;
            let n_lazy = match a.lazy_count.as_slice() {
                [] => 0,
                [n] => *n,
                _ => return Err(OpgError::InvalidParameter("lazy experiment takes one --lazy-count".into())),
            };
            report.reps = a.reps.unwrap_or(DEFAULT_IDENTIFICATION_REPS);
            report.identification = Some(lazy_identification(&data, m, &cfg, n_lazy, None, report.reps, seed)?);
            report.heuristic_identification =
                Some(lazy_identification_heuristic(&data, m, &cfg, n_lazy, None, report.reps, seed)?);
        }
        Experiment::Robustness => {
            let targets = read_targets(&a.target)?;
            if a.lazy_count.is_empty() {
                return Err(OpgError::InvalidParameter("--lazy-count is required".into()));
            }
            report.reps = 1;
            report.robustness = robustness_delta(&data, single()?, &cfg, &a.lazy_count, &targets, seed)?;
        }
        Experiment::Timing => {
            report.reps = a.reps.unwrap_or(1);
            report.runtime_seconds = time_methods(&data, &a.model, &cfg, report.reps)?;
        }
    }
    match &a.output {
        Some(path) => {
            write_json(path, &report)?;
            if !report.curve.is_empty() {
                let mut csv = String::from("level,mean,std\n");
                for p in &report.curve {
                    csv += &format!("{},{},{}\n", p.level, io::round_significant(p.ek.mean), io::round_significant(p.ek.std));
                }
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                io::write_atomic(&path.with_file_name(format!("{stem}.curve.csv")), csv.as_bytes())?;
            }
        }
        None => print!("{}", io::to_json_string(&report)?),
    }
    Ok(())
}

fn exit_code(e: &OpgError) -> u8 {
    match e {
        OpgError::Format(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = std::panic::catch_unwind(|| match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Simulate(a) => simulate(a),
        Command::Experiment(a) => experiment(a),
    });
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(2),
    }
}
