//! The active-learning loop: benchmark and learn modes, and resuming a run
//! from its history file.
//!
//! Each selection method runs in isolation with its own history file, model
//! snapshots and seed-derived random streams (see [`crate::rng`]). A run is
//! strictly sequential: initial fit, then per iteration select, label,
//! refit, evaluate, record.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{self, DatasetError, FeatureMatrix, IndexSets, LabelVector};
use crate::gp::{self, FitOptions, GpError, GpModel};
use crate::history::{self, HistoryError, Hyperparams, RunHeader, RunRecord};
use crate::kernels::KernelSpec;
use crate::metrics::{self, MetricError, MetricKind};
use crate::oracle::{Oracle, OracleError};
use crate::rng;
use crate::selection::{self, Committee, CovarianceCache, SelectionError, SelectionMethod};

pub use crate::history::Mode;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot resume: {0}")]
    Resume(String),
    #[error("oracle failed at iteration {iteration}: {source}")]
    Oracle {
        iteration: usize,
        #[source]
        source: OracleError,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("cannot create output directory {path}: {source}")]
    OutputDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

fn resume_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Resume(msg.into())
}

/// Where the first labeled samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSet {
    /// Benchmark mode: draw this many pool samples from the seed.
    Random { size: usize },
    /// Learn mode: samples whose labels are already known.
    Known { indices: Vec<usize>, labels: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub iterations: usize,
    pub methods: Vec<SelectionMethod>,
    /// Only used in benchmark mode.
    pub metric: MetricKind,
    pub initial: InitialSet,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Query-by-committee members; the three-kernel default when `None`.
    pub committee: Option<Committee>,
    /// Starting kernel of the tracked model.
    pub kernel: KernelSpec,
    pub fit: FitOptions,
    /// Run the methods of one benchmark call on separate threads.
    pub parallel_methods: bool,
}

impl ExperimentConfig {
    pub fn benchmark(methods: Vec<SelectionMethod>, iterations: usize, init_set_size: usize, seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            mode: Mode::Benchmark,
            iterations,
            methods,
            metric: MetricKind::Rmse,
            initial: InitialSet::Random { size: init_set_size },
            seed,
            output_dir: output_dir.into(),
            committee: None,
            kernel: KernelSpec::new(crate::kernels::KernelKind::Rbf),
            fit: FitOptions::default(),
            parallel_methods: false,
        }
    }

    pub fn learn(
        methods: Vec<SelectionMethod>,
        iterations: usize,
        known_indices: Vec<usize>,
        known_labels: Vec<f64>,
        seed: u64,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            mode: Mode::Learn,
            initial: InitialSet::Known { indices: known_indices, labels: known_labels },
            ..Self::benchmark(methods, iterations, 0, seed, output_dir)
        }
    }

    /// Checks the configuration against a pool of `x.nrows()` samples.
    pub fn validate(&self, x: &FeatureMatrix) -> Result<(), ExperimentError> {
        let n = x.nrows();
        if self.iterations == 0 {
            return Err(config_err("iterations must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(config_err("no selection methods given"));
        }
        let unique: HashSet<_> = self.methods.iter().collect();
        if unique.len() != self.methods.len() {
            return Err(config_err("duplicate selection method"));
        }
        if self.methods.contains(&SelectionMethod::Covariance) && x.ncols() < 2 {
            return Err(config_err("covariance sampling needs at least 2 feature columns"));
        }
        if let Some(c) = &self.committee {
            if c.len() as u64 >= rng::MAX_MODEL_SLOTS {
                return Err(config_err(format!("committee of {} exceeds {} members", c.len(), rng::MAX_MODEL_SLOTS - 1)));
            }
        }
        self.kernel.validate().map_err(|e| config_err(e.to_string()))?;
        let initial = match (&self.mode, &self.initial) {
            (Mode::Benchmark, InitialSet::Random { size }) => {
                if *size == 0 || *size >= n {
                    return Err(config_err(format!("initial set size {size} must be in 1..{n}")));
                }
                *size
            }
            (Mode::Learn, InitialSet::Known { indices, labels }) => {
                if indices.is_empty() {
                    return Err(config_err("learn mode needs at least one known sample"));
                }
                if indices.len() != labels.len() {
                    return Err(config_err("known indices and labels differ in length"));
                }
                if labels.iter().any(|v| !v.is_finite()) {
                    return Err(config_err("known labels must be finite"));
                }
                if IndexSets::with_labeled(n, indices.clone()).is_none() {
                    return Err(config_err("known indices must be distinct and inside the pool"));
                }
                indices.len()
            }
            (Mode::Benchmark, _) => return Err(config_err("benchmark mode draws a random initial set")),
            (Mode::Learn, _) => return Err(config_err("learn mode needs known indices and labels")),
        };
        if self.iterations > n - initial {
            return Err(config_err(format!(
                "{} iterations exceed the {} unlabeled samples",
                self.iterations,
                n - initial
            )));
        }
        Ok(())
    }
}

/// Outcome of one method's run (or of the resumed part of it).
#[derive(Debug, Clone)]
pub struct MethodReport {
    pub method: SelectionMethod,
    pub history_path: PathBuf,
    pub final_snapshot: PathBuf,
    pub labeled: Vec<usize>,
    /// Metric per fitted model from iteration 0 (benchmark only).
    pub metric_series: Vec<f64>,
    pub auc: Option<f64>,
    pub runtime: f64,
    /// Model fits per iteration run in this call; entry 0 is the initial fit
    /// for fresh runs.
    pub fits_per_iteration: Vec<usize>,
    /// Wall seconds per iteration run in this call.
    pub iteration_seconds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub mode: Mode,
    pub metric: Option<MetricKind>,
    pub reports: Vec<MethodReport>,
}

enum Labels<'a> {
    Truth(&'a LabelVector),
    Oracle(&'a mut dyn Oracle),
}

impl Labels<'_> {
    fn label(&mut self, x: &FeatureMatrix, index: usize, iteration: usize) -> Result<f64, ExperimentError> {
        match self {
            Self::Truth(y) => Ok(y.get(index)),
            Self::Oracle(o) => {
                let v = o
                    .label(x.row(index), index)
                    .map_err(|source| ExperimentError::Oracle { iteration, source })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(ExperimentError::Oracle { iteration, source: OracleError::NotANumber(v.to_string()) })
                }
            }
        }
    }
}

struct MethodRun<'a> {
    method: SelectionMethod,
    mode: Mode,
    metric: Option<MetricKind>,
    seed: u64,
    x: &'a FeatureMatrix,
    truth: Option<&'a LabelVector>,
    sets: IndexSets,
    labels: Vec<f64>,
    model: Option<GpModel>,
    committee: Committee,
    cache: Option<CovarianceCache>,
    selection_rng: ChaCha8Rng,
    fit: FitOptions,
    /// Completed selections.
    iteration: usize,
    auc_cum: f64,
    runtime_cum: f64,
    out_dir: PathBuf,
    history_path: PathBuf,
    metric_series: Vec<f64>,
    fits_per_iteration: Vec<usize>,
    iteration_seconds: Vec<f64>,
}

impl<'a> MethodRun<'a> {
    fn model(&self) -> &GpModel {
        self.model.as_ref().expect("model fitted before selection")
    }

    fn fit_labeled(&self, spec: &KernelSpec, slot: usize) -> Result<GpModel, GpError> {
        let labeled = self.sets.labeled();
        let features = self.x.select(labeled).expect("labeled indices are in range");
        let mut restarts = rng::restarts(self.seed, self.iteration, slot);
        Ok(gp::fit(&features, &self.labels, spec, &self.fit, &mut restarts)?.with_train_indices(labeled.to_vec()))
    }

    /// Metric of the current model on the unlabeled pool, falling back to
    /// the whole pool when the unlabeled part cannot support the metric.
    fn evaluate(&self) -> Result<Option<f64>, ExperimentError> {
        let (Some(metric), Some(y)) = (self.metric, self.truth) else {
            return Ok(None);
        };
        let held_out = self.sets.unlabeled_vec();
        let score = |rows: &[usize]| -> Result<f64, ExperimentError> {
            let preds: Vec<f64> = self.model().predict_rows(self.x, rows)?.iter().map(|p| p.mean).collect();
            let truths: Vec<f64> = rows.iter().map(|&i| y.get(i)).collect();
            Ok(metric.evaluate(&preds, &truths)?)
        };
        match score(&held_out) {
            Ok(v) => Ok(Some(v)),
            Err(ExperimentError::Metric(_)) => {
                let all: Vec<usize> = (0..self.x.nrows()).collect();
                score(&all).map(Some)
            }
            Err(e) => Err(e),
        }
    }

    fn record(&self, metric_value: Option<f64>) -> Result<PathBuf, ExperimentError> {
        let name = history::snapshot_name(self.method, self.iteration);
        let snapshot = self.out_dir.join(&name);
        gp::snapshot_save(self.model(), &snapshot)?;
        let record = RunRecord {
            snapshot_file: name,
            labeled: self.sets.labeled().to_vec(),
            labels: self.labels.clone(),
            hyperparams: Hyperparams::from(self.model().spec()),
            metric_value,
            auc_cum: metric_value.map(|_| self.auc_cum),
            runtime_cum: self.runtime_cum,
        };
        history::append_record(&self.history_path, &record, self.mode)?;
        Ok(snapshot)
    }

    fn accumulate(&mut self, metric_value: Option<f64>, started: Instant, fits: usize) {
        if let Some(v) = metric_value {
            if let Some(prev) = self.metric_series.last() {
                self.auc_cum += metrics::trapezoid(*prev, v);
            }
            self.metric_series.push(v);
        }
        let seconds = started.elapsed().as_secs_f64();
        self.runtime_cum += seconds;
        self.iteration_seconds.push(seconds);
        self.fits_per_iteration.push(fits);
    }

    /// Fits the initial model and writes the header plus record 0.
    fn start(&mut self, kernel: &KernelSpec) -> Result<(), ExperimentError> {
        let started = Instant::now();
        let header = RunHeader::now(self.mode, self.method, self.seed, self.metric);
        history::write_header(&self.history_path, &header)?;
        self.model = Some(self.fit_labeled(kernel, 0)?);
        let metric_value = self.evaluate()?;
        self.accumulate(metric_value, started, 1);
        self.record(metric_value)?;
        Ok(())
    }

    fn select(&mut self, candidates: &[usize]) -> Result<(usize, usize), ExperimentError> {
        let x = self.x;
        Ok(match self.method {
            SelectionMethod::Random => (selection::select_random(candidates, &mut self.selection_rng)?, 0),
            SelectionMethod::Uncertainty => (selection::select_uncertainty(self.model(), x, candidates)?, 0),
            SelectionMethod::Covariance => {
                let cache = self.cache.as_ref().expect("covariance cache initialized");
                (selection::select_covariance(self.model(), x, candidates, cache)?, 0)
            }
            SelectionMethod::Qbc => {
                let members = self
                    .committee
                    .members()
                    .iter()
                    .enumerate()
                    .map(|(k, spec)| self.fit_labeled(spec, k + 1))
                    .collect::<Result<Vec<_>, _>>()?;
                (selection::select_qbc(&members, x, candidates)?, members.len())
            }
            SelectionMethod::Fft => (selection::select_fft(x, self.sets.labeled(), candidates)?, 0),
        })
    }

    fn step(&mut self, labels: &mut Labels<'_>) -> Result<PathBuf, ExperimentError> {
        let started = Instant::now();
        let candidates = self.sets.unlabeled_vec();
        let (index, committee_fits) = self.select(&candidates)?;
        let label = labels.label(self.x, index, self.iteration + 1)?;

        self.sets.move_to_labeled(index)?;
        self.labels.push(label);
        if let Some(cache) = &mut self.cache {
            cache.remove(index)?;
        }
        self.iteration += 1;
        let warm = *self.model().spec();
        self.model = Some(self.fit_labeled(&warm, 0)?);
        let metric_value = self.evaluate()?;
        self.accumulate(metric_value, started, 1 + committee_fits);
        self.record(metric_value)
    }

    fn report(self, final_snapshot: PathBuf) -> MethodReport {
        MethodReport {
            method: self.method,
            history_path: self.history_path,
            final_snapshot,
            labeled: self.sets.labeled().to_vec(),
            auc: self.metric.map(|_| self.auc_cum),
            metric_series: self.metric_series,
            runtime: self.runtime_cum,
            fits_per_iteration: self.fits_per_iteration,
            iteration_seconds: self.iteration_seconds,
        }
    }
}

fn covariance_cache(method: SelectionMethod, x: &FeatureMatrix, unlabeled: &[usize]) -> Result<Option<CovarianceCache>, SelectionError> {
    if method == SelectionMethod::Covariance {
        CovarianceCache::init(x, unlabeled).map(Some)
    } else {
        Ok(None)
    }
}

fn run_method(
    config: &ExperimentConfig,
    method: SelectionMethod,
    x: &FeatureMatrix,
    truth: Option<&LabelVector>,
    labels: &mut Labels<'_>,
) -> Result<MethodReport, ExperimentError> {
    let (sets, initial_labels) = match &config.initial {
        InitialSet::Random { size } => {
            let sets = dataset::draw_initial_set(x.nrows(), *size, &mut rng::initial_set(config.seed))?;
            let y = truth.ok_or_else(|| config_err("benchmark mode needs labels"))?;
            let known = sets.labeled().iter().map(|&i| y.get(i)).collect();
            (sets, known)
        }
        InitialSet::Known { indices, labels } => (
            IndexSets::with_labeled(x.nrows(), indices.clone())
                .ok_or_else(|| config_err("known indices must be distinct and inside the pool"))?,
            labels.clone(),
        ),
    };
    let cache = covariance_cache(method, x, &sets.unlabeled_vec())?;
    let mut run = MethodRun {
        method,
        mode: config.mode,
        metric: (config.mode == Mode::Benchmark).then_some(config.metric),
        seed: config.seed,
        x,
        truth,
        sets,
        labels: initial_labels,
        model: None,
        committee: config.committee.clone().unwrap_or_default(),
        cache,
        selection_rng: rng::selection(config.seed),
        fit: config.fit,
        iteration: 0,
        auc_cum: 0.0,
        runtime_cum: 0.0,
        out_dir: config.output_dir.clone(),
        history_path: config.output_dir.join(history::history_file_name(config.mode, method)),
        metric_series: Vec::new(),
        fits_per_iteration: Vec::new(),
        iteration_seconds: Vec::new(),
    };
    run.start(&config.kernel)?;
    let mut last = config.output_dir.join(history::snapshot_name(method, 0));
    for _ in 0..config.iterations {
        last = run.step(labels)?;
    }
    Ok(run.report(last))
}

fn prepare_output(dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::OutputDir { path: dir.to_path_buf(), source })
}

/// Benchmark mode: all labels known, revealed one per iteration. Every
/// method starts from the same seed-drawn initial set.
pub fn run_benchmark(config: &ExperimentConfig, x: &FeatureMatrix, y: &LabelVector) -> Result<RunSummary, ExperimentError> {
    if config.mode != Mode::Benchmark {
        return Err(config_err("run_benchmark needs a benchmark configuration"));
    }
    if y.len() != x.nrows() {
        return Err(config_err(format!("{} labels for {} samples", y.len(), x.nrows())));
    }
    config.validate(x)?;
    prepare_output(&config.output_dir)?;

    let one = |method: &SelectionMethod| run_method(config, *method, x, Some(y), &mut Labels::Truth(y));
    let results: Vec<Result<MethodReport, ExperimentError>> = if config.parallel_methods {
        crate::par::map_slice(&config.methods, one)
    } else {
        config.methods.iter().map(one).collect()
    };
    Ok(RunSummary {
        mode: Mode::Benchmark,
        metric: Some(config.metric),
        reports: results.into_iter().collect::<Result<_, _>>()?,
    })
}

/// Learn mode: labels of selected samples come from `oracle`. On oracle
/// failure the history keeps every completed record and stays resumable.
pub fn run_learn(config: &ExperimentConfig, x: &FeatureMatrix, oracle: &mut dyn Oracle) -> Result<RunSummary, ExperimentError> {
    if config.mode != Mode::Learn {
        return Err(config_err("run_learn needs a learn configuration"));
    }
    config.validate(x)?;
    prepare_output(&config.output_dir)?;
    let mut reports = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        reports.push(run_method(config, method, x, None, &mut Labels::Oracle(&mut *oracle))?);
    }
    Ok(RunSummary { mode: Mode::Learn, metric: None, reports })
}

/// What a resumed run needs besides its history file.
pub struct ResumeInputs<'a> {
    /// The original sample pool.
    pub x: &'a FeatureMatrix,
    /// The original labels; required for benchmark histories.
    pub labels: Option<&'a LabelVector>,
    /// Required for learn histories.
    pub oracle: Option<&'a mut dyn Oracle>,
    pub committee: Option<Committee>,
    pub fit: FitOptions,
}

impl<'a> ResumeInputs<'a> {
    pub fn new(x: &'a FeatureMatrix) -> Self {
        Self { x, labels: None, oracle: None, committee: None, fit: FitOptions::default() }
    }
}

/// Continues the run recorded in `history_path` for `extra_iterations`
/// more selections, appending to the same file. Mode, method, seed and
/// metric come from the header and cannot be changed.
pub fn resume(history_path: impl AsRef<Path>, extra_iterations: usize, inputs: ResumeInputs<'_>) -> Result<MethodReport, ExperimentError> {
    let history_path = history_path.as_ref();
    let (header, records) = history::parse_history(history_path)?;
    let ResumeInputs { x, labels: truth, oracle, committee, fit } = inputs;
    let mut labels = match (header.mode, oracle) {
        (Mode::Learn, Some(o)) => Labels::Oracle(o),
        (Mode::Learn, None) => return Err(resume_err("learn histories need an oracle")),
        (Mode::Benchmark, _) => Labels::Truth(truth.ok_or_else(|| resume_err("benchmark histories need the original labels"))?),
    };
    if let Some(y) = truth {
        if y.len() != x.nrows() {
            return Err(resume_err(format!("{} labels for {} samples", y.len(), x.nrows())));
        }
    }
    let (first, last) = match (records.first(), records.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(resume_err("history has no records")),
    };
    let n = x.nrows();
    let out_dir = history_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let final_snapshot = out_dir.join(&last.snapshot_file);
    let completed = records.len() - 1;

    if header.method == SelectionMethod::Covariance && x.ncols() < 2 {
        return Err(resume_err("covariance sampling needs at least 2 feature columns"));
    }
    let initial_sets = IndexSets::with_labeled(n, first.labeled.clone())
        .ok_or_else(|| resume_err("first record's indices do not fit the dataset"))?;
    let sets = IndexSets::with_labeled(n, last.labeled.clone())
        .ok_or_else(|| resume_err("last record's indices do not fit the dataset"))?;
    if let Labels::Truth(y) = &labels {
        if last.labeled.iter().zip(&last.labels).any(|(&i, &v)| y.get(i) != v) {
            return Err(resume_err("recorded labels differ from the dataset"));
        }
    }
    if extra_iterations > sets.unlabeled().len() {
        return Err(resume_err(format!(
            "{extra_iterations} iterations exceed the {} unlabeled samples",
            sets.unlabeled().len()
        )));
    }
    let model = gp::snapshot_load(&final_snapshot)?;
    if model.train_indices() != last.labeled.as_slice() || model.train_targets() != last.labels.as_slice() {
        return Err(resume_err(format!("snapshot {} does not match the last record", last.snapshot_file)));
    }
    if model.train_features().ncols() != x.ncols() {
        return Err(resume_err("snapshot feature dimension differs from the dataset"));
    }
    if extra_iterations == 0 {
        return Ok(MethodReport {
            method: header.method,
            history_path: history_path.to_path_buf(),
            final_snapshot,
            labeled: last.labeled.clone(),
            metric_series: records.iter().filter_map(|r| r.metric_value).collect(),
            auc: last.auc_cum,
            runtime: last.runtime_cum,
            fits_per_iteration: Vec::new(),
            iteration_seconds: Vec::new(),
        });
    }

    // Rebuild stream positions and the covariance sums exactly as the
    // original run left them.
    let mut selection_rng = rng::selection(header.seed);
    if header.method == SelectionMethod::Random {
        let pool0 = initial_sets.unlabeled().len();
        for i in 0..completed {
            selection::select_random(&(0..pool0 - i).collect::<Vec<_>>(), &mut selection_rng)?;
        }
    }
    let mut cache = covariance_cache(header.method, x, &initial_sets.unlabeled_vec())?;
    if let Some(cache) = &mut cache {
        for idx in &last.labeled[first.labeled.len()..] {
            cache.remove(*idx)?;
        }
    }

    let mut run = MethodRun {
        method: header.method,
        mode: header.mode,
        metric: header.metric,
        seed: header.seed,
        x,
        truth,
        sets,
        labels: last.labels.clone(),
        model: Some(model),
        committee: committee.unwrap_or_default(),
        cache,
        selection_rng,
        fit,
        iteration: completed,
        auc_cum: last.auc_cum.unwrap_or(0.0),
        runtime_cum: last.runtime_cum,
        out_dir,
        history_path: history_path.to_path_buf(),
        metric_series: records.iter().filter_map(|r| r.metric_value).collect(),
        fits_per_iteration: Vec::new(),
        iteration_seconds: Vec::new(),
    };
    let mut last_snapshot = final_snapshot;
    for _ in 0..extra_iterations {
        last_snapshot = run.step(&mut labels)?;
    }
    Ok(run.report(last_snapshot))
}
