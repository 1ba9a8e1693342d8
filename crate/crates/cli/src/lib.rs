//! Command-line front end: benchmark, learn and resume runs plus the summary
//! table and plot they leave behind.

pub mod plot;

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use poolal_core::dataset::{load_csv, FeatureMatrix, LabelVector};
use poolal_core::decimal;
use poolal_core::experiment::{self, ExperimentConfig, ExperimentError, ResumeInputs, RunSummary};
use poolal_core::history::{self, Mode};
use poolal_core::kernels::{KernelKind, KernelSpec};
use poolal_core::oracle::{CommandOracle, Oracle, Prompt};
use poolal_core::{MetricKind, SelectionMethod};

use plot::{PlotSeries, PlotSpec};

pub const SUMMARY_FILE: &str = "summary.tsv";
pub const PLOT_FILE: &str = "plot.svg";
pub const SUMMARY_HEADER: &str = "method\tfinal_metric\tauc\truntime_s";

#[derive(Debug, Parser)]
#[command(name = "poolal", version, about = "Pool-based active learning for regression")]
pub struct Cli {
    /// Worker threads for data-parallel kernels (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay labels from the data file and compare selection methods.
    Benchmark(BenchmarkArgs),
    /// Ask an oracle for the labels of selected samples.
    Learn(LearnArgs),
    /// Continue a run from its history file.
    Resume(ResumeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Headed CSV of the sample pool.
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated selection methods.
    #[arg(long, value_delimiter = ',', default_value = "random,uncertainty,covariance,qbc,fft")]
    pub methods: Vec<SelectionMethod>,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub iterations: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// rbf, matern12 or matern32.
    #[arg(long, default_value = "rbf")]
    pub kernel: KernelKind,
    /// Output directory for history files and snapshots.
    #[arg(long)]
    pub out: PathBuf,
    /// Run the methods on separate threads.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Column holding the true labels.
    #[arg(long)]
    pub label_column: String,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub init_set_size: u64,
    /// rmse or r2.
    #[arg(long, default_value = "rmse")]
    pub metric: MetricKind,
}

#[derive(Debug, Args)]
#[group(id = "oracle_source", multiple = false)]
pub struct OracleArgs {
    /// Shell command that reads `v1,...,vN` on stdin and prints the label.
    #[arg(long, group = "oracle_source")]
    pub oracle_cmd: Option<String>,
    /// Ask for labels on the terminal.
    #[arg(long, group = "oracle_source")]
    pub oracle_prompt: bool,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Column to drop from the features, if the file has one.
    #[arg(long)]
    pub label_column: Option<String>,
    /// Pool indices whose labels are already known.
    #[arg(long, value_delimiter = ',', required = true)]
    pub known_indices: Vec<usize>,
    /// Labels of the known indices, in the same order.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub known_labels: Vec<f64>,
    #[command(flatten)]
    pub oracle: OracleArgs,
}

#[derive(Debug, Args)]
pub struct ResumeArgs {
    #[arg(long)]
    pub history: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub extra_iterations: u64,
    /// Headed CSV of the pool the run was started on.
    #[arg(long)]
    pub data: PathBuf,
    /// Label column; required for benchmark histories.
    #[arg(long)]
    pub label_column: Option<String>,
    #[command(flatten)]
    pub oracle: OracleArgs,
}

/// A failure mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) | Self::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(_) => Self::Usage(e.to_string()),
            other => Self::Runtime(other.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::Learn(args) => cmd_learn(args),
        Command::Resume(args) => cmd_resume(args),
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<u64>) -> Result<(), CliError> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global().map_err(runtime)?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(_threads: Option<u64>) -> Result<(), CliError> {
    Ok(())
}

fn load(path: &Path, label_column: Option<&str>) -> Result<(FeatureMatrix, Option<LabelVector>), CliError> {
    load_csv(path, label_column).map_err(|e| runtime(format!("--data {}: {e}", path.display())))
}

fn apply_run_args(config: &mut ExperimentConfig, run: &RunArgs) {
    config.kernel = KernelSpec::new(run.kernel);
    config.parallel_methods = run.parallel;
}

fn to_usize(v: u64, flag: &str) -> Result<usize, CliError> {
    usize::try_from(v).map_err(|_| CliError::Usage(format!("{flag}: value too large")))
}

pub fn cmd_benchmark(args: BenchmarkArgs) -> Result<(), CliError> {
    let (x, y) = load(&args.run.data, Some(&args.label_column))?;
    let y = y.expect("label column requested");
    let n = x.nrows();
    let init = to_usize(args.init_set_size, "--init-set-size")?;
    if init >= n {
        return Err(CliError::Usage(format!("--init-set-size: {init} must be smaller than the pool of {n} samples")));
    }
    let iterations = to_usize(args.run.iterations, "--iterations")?;
    if iterations > n - init {
        return Err(CliError::Usage(format!("--iterations: {iterations} exceeds the {} unlabeled samples", n - init)));
    }
    check_methods(&args.run.methods, x.ncols())?;
    let mut config = ExperimentConfig::benchmark(args.run.methods.clone(), iterations, init, args.run.seed, &args.run.out);
    config.metric = args.metric;
    apply_run_args(&mut config, &args.run);
    let summary = experiment::run_benchmark(&config, &x, &y)?;
    write_outputs(&summary, &args.run.out, init)?;
    for r in &summary.reports {
        println!("{}", r.history_path.display());
    }
    Ok(())
}

fn check_methods(methods: &[SelectionMethod], ncols: usize) -> Result<(), CliError> {
    let mut seen = HashSet::new();
    for m in methods {
        if !seen.insert(m) {
            return Err(CliError::Usage(format!("--methods: {m} is listed twice")));
        }
    }
    if ncols < 2 && methods.contains(&SelectionMethod::Covariance) {
        return Err(CliError::Usage("--methods: covariance needs at least 2 feature columns".into()));
    }
    Ok(())
}

/// Summary table text for a benchmark run.
pub fn summary_tsv(summary: &RunSummary) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in &summary.reports {
        let last = r.metric_series.last().copied().unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.3}",
            r.method,
            decimal::format(last),
            decimal::format(r.auc.unwrap_or(0.0)),
            r.runtime
        );
    }
    out
}

/// Plot description for a benchmark run whose initial set has `init` samples.
pub fn plot_spec(summary: &RunSummary, init: usize) -> PlotSpec {
    PlotSpec {
        metric_name: summary.metric.map_or("metric", MetricKind::header_token).to_owned(),
        first_size: init,
        series: summary
            .reports
            .iter()
            .map(|r| PlotSeries { name: r.method.to_string(), values: r.metric_series.clone() })
            .collect(),
    }
}

fn write_outputs(summary: &RunSummary, out: &Path, init: usize) -> Result<(), CliError> {
    std::fs::write(out.join(SUMMARY_FILE), summary_tsv(summary)).map_err(runtime)?;
    plot::emit_plot(&plot_spec(summary, init), out.join(PLOT_FILE)).map_err(runtime)
}

fn make_oracle(args: &OracleArgs) -> Option<Box<dyn Oracle>> {
    if let Some(cmd) = &args.oracle_cmd {
        Some(Box::new(CommandOracle::new(cmd.clone())))
    } else if args.oracle_prompt {
        Some(Box::new(Prompt::stdio()))
    } else {
        None
    }
}

pub fn cmd_learn(args: LearnArgs) -> Result<(), CliError> {
    let mut oracle = make_oracle(&args.oracle)
        .ok_or_else(|| CliError::Usage("one of --oracle-cmd or --oracle-prompt is required".into()))?;
    if args.known_indices.len() != args.known_labels.len() {
        return Err(CliError::Usage(format!(
            "--known-labels: {} labels given for {} --known-indices",
            args.known_labels.len(),
            args.known_indices.len()
        )));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = args.known_indices.iter().find(|i| !seen.insert(**i)) {
        return Err(CliError::Usage(format!("--known-indices: duplicate index {dup}")));
    }
    if let Some(v) = args.known_labels.iter().find(|v| !v.is_finite()) {
        return Err(CliError::Usage(format!("--known-labels: {v} is not a finite number")));
    }
    let (x, _) = load(&args.run.data, args.label_column.as_deref())?;
    let n = x.nrows();
    if let Some(bad) = args.known_indices.iter().find(|&&i| i >= n) {
        return Err(CliError::Usage(format!("--known-indices: {bad} is outside the pool of {n} samples")));
    }
    let iterations = to_usize(args.run.iterations, "--iterations")?;
    let unlabeled = n - args.known_indices.len();
    if iterations > unlabeled {
        return Err(CliError::Usage(format!("--iterations: {iterations} exceeds the {unlabeled} unlabeled samples")));
    }
    check_methods(&args.run.methods, x.ncols())?;
    let mut config = ExperimentConfig::learn(
        args.run.methods.clone(),
        iterations,
        args.known_indices.clone(),
        args.known_labels.clone(),
        args.run.seed,
        &args.run.out,
    );
    apply_run_args(&mut config, &args.run);
    config.parallel_methods = false;
    let summary = experiment::run_learn(&config, &x, oracle.as_mut())?;
    for r in &summary.reports {
        println!("{}", r.final_snapshot.display());
    }
    Ok(())
}

pub fn cmd_resume(args: ResumeArgs) -> Result<(), CliError> {
    let (header, _) = history::parse_history(&args.history).map_err(|e| runtime(format!("--history: {e}")))?;
    let labels_needed = header.mode == Mode::Benchmark;
    if labels_needed && args.label_column.is_none() {
        return Err(CliError::Usage("--label-column is required to resume a benchmark history".into()));
    }
    let mut oracle = make_oracle(&args.oracle);
    if header.mode == Mode::Learn && oracle.is_none() {
        return Err(CliError::Usage("resuming a learn history needs --oracle-cmd or --oracle-prompt".into()));
    }
    let (x, y) = load(&args.data, args.label_column.as_deref())?;
    let mut inputs = ResumeInputs::new(&x);
    if labels_needed {
        inputs.labels = y.as_ref();
    }
    if header.mode == Mode::Learn {
        inputs.oracle = oracle.as_mut().map(|o| &mut **o as &mut dyn Oracle);
    }
    let extra = to_usize(args.extra_iterations, "--extra-iterations")?;
    let report = experiment::resume(&args.history, extra, inputs)?;
    println!("{}", report.final_snapshot.display());
    Ok(())
}
