//! Run-history files.
//!
//! Two header lines followed by one tab-separated line per fitted model:
//!
//! ```text
//! #start time: 16102026-142501, mode: benchmark, sample selection method: qbc, seed: 5
//! #models    labeled_samples    labels    hyperparams    RMSE    AUC    runtime
//! model_qbc_00000.json    [1, 2, 3]    [0.5, 0.3, 0.4]    {signal_variance=1.0, length_scale=0.5, noise_level=1e-05}    0.02    0.0    0.4
//! ```
//!
//! Learn-mode files drop the metric and AUC columns. Lists are cumulative,
//! the metric column holds the current value, and AUC and runtime accumulate.

use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::decimal;
use crate::kernels::KernelSpec;
use crate::metrics::MetricKind;
use crate::selection::SelectionMethod;

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("history i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
}

fn malformed(line: usize, message: impl Into<String>) -> HistoryError {
    HistoryError::Malformed { line, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Benchmark,
    Learn,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Benchmark => "benchmark",
            Self::Learn => "learn",
        }
    }

    /// Tab-separated fields per body line.
    pub fn columns(self) -> usize {
        match self {
            Self::Benchmark => 7,
            Self::Learn => 5,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "benchmark" => Ok(Self::Benchmark),
            "learn" => Ok(Self::Learn),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

/// Fixed settings of one experiment run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunHeader {
    /// Local start time as `DDMMYYYY-HHmmSS`.
    pub start_time: String,
    pub mode: Mode,
    pub method: SelectionMethod,
    pub seed: u64,
    /// Present exactly in benchmark mode.
    pub metric: Option<MetricKind>,
}

pub fn format_start_time(t: &chrono::DateTime<chrono::Local>) -> String {
    t.format("%d%m%Y-%H%M%S").to_string()
}

fn valid_start_time(s: &str) -> bool {
    s.len() == 15
        && s.char_indices().all(|(i, c)| if i == 8 { c == '-' } else { c.is_ascii_digit() })
}

impl RunHeader {
    /// Header stamped with the current local time.
    pub fn now(mode: Mode, method: SelectionMethod, seed: u64, metric: Option<MetricKind>) -> Self {
        Self { start_time: format_start_time(&chrono::Local::now()), mode, method, seed, metric }
    }

    fn validate(&self) -> Result<(), HistoryError> {
        if !valid_start_time(&self.start_time) {
            return Err(HistoryError::InvalidHeader(format!("start time {:?}", self.start_time)));
        }
        if (self.mode == Mode::Benchmark) != self.metric.is_some() {
            return Err(HistoryError::InvalidHeader("a metric is required in benchmark mode only".into()));
        }
        Ok(())
    }
}

/// Hyperparameters of the tracked model, written in fixed key order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub signal_variance: f64,
    pub length_scale: f64,
    pub noise_level: f64,
}

impl From<&KernelSpec> for Hyperparams {
    fn from(spec: &KernelSpec) -> Self {
        Self {
            signal_variance: spec.signal_variance,
            length_scale: spec.length_scale,
            noise_level: spec.noise_variance,
        }
    }
}

const HYPERPARAM_KEYS: [&str; 3] = ["signal_variance", "length_scale", "noise_level"];

/// One body line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub snapshot_file: String,
    pub labeled: Vec<usize>,
    pub labels: Vec<f64>,
    pub hyperparams: Hyperparams,
    /// Metric of this iteration's model (benchmark only).
    pub metric_value: Option<f64>,
    /// Area under the metric curve so far (benchmark only).
    pub auc_cum: Option<f64>,
    /// Wall seconds so far.
    pub runtime_cum: f64,
}

pub fn history_file_name(mode: Mode, method: SelectionMethod) -> String {
    format!("output_{mode}_{method}.txt")
}

pub fn snapshot_name(method: SelectionMethod, iteration: usize) -> String {
    format!("model_{method}_{iteration:05}.json")
}

pub fn format_header(header: &RunHeader) -> Result<String, HistoryError> {
    header.validate()?;
    let mut out = format!(
        "#start time: {}, mode: {}, sample selection method: {}, seed: {}\n",
        header.start_time, header.mode, header.method, header.seed
    );
    match header.metric {
        Some(metric) => out.push_str(&format!(
            "#models\tlabeled_samples\tlabels\thyperparams\t{}\tAUC\truntime\n",
            metric.header_token()
        )),
        None => out.push_str("#models\tlabeled_samples\tlabels\thyperparams\truntime\n"),
    }
    Ok(out)
}

fn format_list<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    format!("[{}]", items.iter().map(f).collect::<Vec<_>>().join(", "))
}

pub fn format_record(record: &RunRecord, mode: Mode) -> Result<String, HistoryError> {
    let invalid = |m: &str| Err(HistoryError::InvalidRecord(m.to_owned()));
    if record.labeled.is_empty() {
        return invalid("empty labeled list");
    }
    if record.labeled.len() != record.labels.len() {
        return invalid("labeled and labels differ in length");
    }
    if record.snapshot_file.is_empty() || record.snapshot_file.contains(['\t', '\n', '\r']) {
        return invalid("snapshot file name must be non-empty without tabs or newlines");
    }
    let benchmark_columns = record.metric_value.is_some() && record.auc_cum.is_some();
    let learn_columns = record.metric_value.is_none() && record.auc_cum.is_none();
    if (mode == Mode::Benchmark && !benchmark_columns) || (mode == Mode::Learn && !learn_columns) {
        return invalid("metric and AUC must be present exactly in benchmark mode");
    }
    let h = &record.hyperparams;
    let numbers = [record.runtime_cum, h.signal_variance, h.length_scale, h.noise_level]
        .into_iter()
        .chain(record.labels.iter().copied())
        .chain(record.metric_value)
        .chain(record.auc_cum);
    if numbers.into_iter().any(|v| !v.is_finite()) {
        return invalid("non-finite value");
    }

    let hyper = HYPERPARAM_KEYS
        .iter()
        .zip([h.signal_variance, h.length_scale, h.noise_level])
        .map(|(k, v)| format!("{k}={}", decimal::format(v)))
        .collect::<Vec<_>>()
        .join(", ");
    let mut fields = vec![
        record.snapshot_file.clone(),
        format_list(&record.labeled, usize::to_string),
        format_list(&record.labels, |v| decimal::format(*v)),
        format!("{{{hyper}}}"),
    ];
    if let (Some(metric), Some(auc)) = (record.metric_value, record.auc_cum) {
        fields.push(decimal::format(metric));
        fields.push(decimal::format(auc));
    }
    fields.push(decimal::format(record.runtime_cum));
    Ok(fields.join("\t") + "\n")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HistoryError + '_ {
    move |source| HistoryError::Io { path: path.to_path_buf(), source }
}

/// Creates (or truncates) `path` with the two header lines.
pub fn write_header(path: impl AsRef<Path>, header: &RunHeader) -> Result<(), HistoryError> {
    let path = path.as_ref();
    let text = format_header(header)?;
    std::fs::write(path, text).map_err(io_err(path))
}

/// Appends one body line.
pub fn append_record(path: impl AsRef<Path>, record: &RunRecord, mode: Mode) -> Result<(), HistoryError> {
    let path = path.as_ref();
    let line = format_record(record, mode)?;
    let mut file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
    file.write_all(line.as_bytes()).map_err(io_err(path))
}

pub fn parse_history(path: impl AsRef<Path>) -> Result<(RunHeader, Vec<RunRecord>), HistoryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_history_str(&text)
}

fn parse_first_line(line: &str) -> Result<(String, Mode, SelectionMethod, u64), HistoryError> {
    let rest = line
        .strip_prefix("#start time: ")
        .ok_or_else(|| malformed(1, "expected '#start time: '"))?;
    let parts: Vec<&str> = rest.split(", ").collect();
    let [time, mode, method, seed] = parts.as_slice() else {
        return Err(malformed(1, "expected four comma-separated settings"));
    };
    let field = |part: &str, key: &str| -> Result<String, HistoryError> {
        part.strip_prefix(key)
            .map(str::to_owned)
            .ok_or_else(|| malformed(1, format!("expected {key:?}")))
    };
    let mode = field(mode, "mode: ")?.parse::<Mode>().map_err(|m| malformed(1, m))?;
    let method = field(method, "sample selection method: ")?
        .parse::<SelectionMethod>()
        .map_err(|e| malformed(1, e.to_string()))?;
    let seed = field(seed, "seed: ")?
        .parse::<u64>()
        .map_err(|e| malformed(1, format!("seed: {e}")))?;
    let time = (*time).to_owned();
    if !valid_start_time(&time) {
        return Err(malformed(1, format!("start time {time:?} is not DDMMYYYY-HHmmSS")));
    }
    Ok((time, mode, method, seed))
}

fn parse_second_line(line: &str, mode: Mode) -> Result<Option<MetricKind>, HistoryError> {
    let tokens: Vec<&str> = line.split('\t').collect();
    if tokens.len() != mode.columns() {
        return Err(malformed(2, format!(
            "{} columns for {mode} mode, found {}",
            mode.columns(),
            tokens.len()
        )));
    }
    let expected: Vec<&str> = match mode {
        Mode::Benchmark => vec!["#models", "labeled_samples", "labels", "hyperparams", tokens[4], "AUC", "runtime"],
        Mode::Learn => vec!["#models", "labeled_samples", "labels", "hyperparams", "runtime"],
    };
    if tokens != expected {
        return Err(malformed(2, "unexpected column titles"));
    }
    match mode {
        Mode::Benchmark => MetricKind::from_header_token(tokens[4])
            .map(Some)
            .ok_or_else(|| malformed(2, format!("unknown metric column {:?}", tokens[4]))),
        Mode::Learn => Ok(None),
    }
}

fn parse_list<T>(text: &str, line: usize, what: &str, item: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, HistoryError> {
    let inner = text
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| malformed(line, format!("{what}: expected [..]")))?;
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(", ")
        .map(|s| item(s).ok_or_else(|| malformed(line, format!("{what}: bad item {s:?}"))))
        .collect()
}

fn parse_number(text: &str, line: usize, what: &str) -> Result<f64, HistoryError> {
    if text.trim() != text {
        return Err(malformed(line, format!("{what}: stray whitespace")));
    }
    decimal::parse(text).ok_or_else(|| malformed(line, format!("{what}: not a number: {text:?}")))
}

fn parse_hyperparams(text: &str, line: usize) -> Result<Hyperparams, HistoryError> {
    let inner = text
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| malformed(line, "hyperparams: expected {..}"))?;
    let pairs: Vec<&str> = inner.split(", ").collect();
    if pairs.len() != HYPERPARAM_KEYS.len() {
        return Err(malformed(line, "hyperparams: expected 3 entries"));
    }
    let mut values = [0.0; 3];
    for ((pair, key), slot) in pairs.iter().zip(HYPERPARAM_KEYS).zip(&mut values) {
        let v = pair
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| malformed(line, format!("hyperparams: expected {key}=..")))?;
        *slot = parse_number(v, line, key)?;
    }
    Ok(Hyperparams { signal_variance: values[0], length_scale: values[1], noise_level: values[2] })
}

fn parse_record(text: &str, line: usize, mode: Mode) -> Result<RunRecord, HistoryError> {
    let fields: Vec<&str> = text.split('\t').collect();
    if fields.len() != mode.columns() {
        return Err(malformed(line, format!(
            "{} columns for {mode} mode, found {}",
            mode.columns(),
            fields.len()
        )));
    }
    if fields[0].is_empty() {
        return Err(malformed(line, "empty snapshot file name"));
    }
    let labeled = parse_list(fields[1], line, "labeled_samples", |s| {
        // Only canonical integers, so re-writing reproduces the text.
        let v: usize = s.parse().ok()?;
        (v.to_string() == s).then_some(v)
    })?;
    let labels = parse_list(fields[2], line, "labels", decimal::parse)?;
    let hyperparams = parse_hyperparams(fields[3], line)?;
    let (metric_value, auc_cum) = match mode {
        Mode::Benchmark => (
            Some(parse_number(fields[4], line, "metric")?),
            Some(parse_number(fields[5], line, "AUC")?),
        ),
        Mode::Learn => (None, None),
    };
    let runtime_cum = parse_number(fields[mode.columns() - 1], line, "runtime")?;
    Ok(RunRecord {
        snapshot_file: fields[0].to_owned(),
        labeled,
        labels,
        hyperparams,
        metric_value,
        auc_cum,
        runtime_cum,
    })
}

/// Parses a complete history. Accepts a trailing newline and nothing else
/// beyond the written lines.
pub fn parse_history_str(text: &str) -> Result<(RunHeader, Vec<RunRecord>), HistoryError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut lines = body.split('\n');
    let first = lines.next().filter(|l| !l.is_empty()).ok_or_else(|| malformed(1, "missing header"))?;
    let (start_time, mode, method, seed) = parse_first_line(first)?;
    let second = lines.next().ok_or_else(|| malformed(2, "missing column header"))?;
    let metric = parse_second_line(second, mode)?;
    let header = RunHeader { start_time, mode, method, seed, metric };

    let mut records: Vec<RunRecord> = Vec::new();
    for (i, text) in lines.enumerate() {
        let line = i + 3;
        let record = parse_record(text, line, mode)?;
        if record.labeled.is_empty() {
            return Err(malformed(line, "empty labeled list"));
        }
        if record.labeled.len() != record.labels.len() {
            return Err(malformed(line, "labeled and labels differ in length"));
        }
        if let Some(prev) = records.last() {
            let extends = record.labeled.len() == prev.labeled.len() + 1
                && record.labeled.starts_with(&prev.labeled)
                && record.labels.starts_with(&prev.labels);
            if !extends {
                return Err(malformed(line, "labeled list does not extend the previous line by one sample"));
            }
            if record.runtime_cum < prev.runtime_cum {
                return Err(malformed(line, "runtime decreased"));
            }
            // R² can be negative, so only RMSE areas must grow.
            if metric == Some(MetricKind::Rmse) && record.auc_cum < prev.auc_cum {
                return Err(malformed(line, "AUC decreased"));
            }
        }
        let mut seen = std::collections::HashSet::new();
        if !record.labeled.iter().all(|i| seen.insert(*i)) {
            return Err(malformed(line, "duplicate labeled index"));
        }
        records.push(record);
    }
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(mode: Mode) -> RunHeader {
        RunHeader {
            start_time: "16102026-142501".into(),
            mode,
            method: SelectionMethod::Qbc,
            seed: 5,
            metric: (mode == Mode::Benchmark).then_some(MetricKind::Rmse),
        }
    }

    fn record(labeled: Vec<usize>, labels: Vec<f64>, benchmark: bool) -> RunRecord {
        RunRecord {
            snapshot_file: "model_qbc_00000.json".into(),
            labeled,
            labels,
            hyperparams: Hyperparams { signal_variance: 1.0, length_scale: 0.5, noise_level: 1e-5 },
            metric_value: benchmark.then_some(0.02),
            auc_cum: benchmark.then_some(0.435),
            runtime_cum: 400.0,
        }
    }

    #[test]
    fn header_lines() {
        let text = format_header(&header(Mode::Benchmark)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "#start time: 16102026-142501, mode: benchmark, sample selection method: qbc, seed: 5"
        );
        assert_eq!(lines[1].split('\t').count(), 7);
        assert_eq!(lines[1], "#models\tlabeled_samples\tlabels\thyperparams\tRMSE\tAUC\truntime");

        let learn = format_header(&header(Mode::Learn)).unwrap();
        assert_eq!(learn.lines().nth(1).unwrap().split('\t').count(), 5);
    }

    #[test]
    fn header_round_trip() {
        for mode in [Mode::Benchmark, Mode::Learn] {
            let h = header(mode);
            let (back, records) = parse_history_str(&format_header(&h).unwrap()).unwrap();
            assert_eq!(back, h);
            assert!(records.is_empty());
        }
    }

    #[test]
    fn body_line_layout() {
        let line = format_record(&record(vec![1, 2, 3], vec![0.5, 0.3, 0.4], true), Mode::Benchmark).unwrap();
        assert_eq!(
            line,
            "model_qbc_00000.json\t[1, 2, 3]\t[0.5, 0.3, 0.4]\t\
             {signal_variance=1.0, length_scale=0.5, noise_level=1e-05}\t0.02\t0.435\t400.0\n"
        );
        let learn = format_record(&record(vec![1], vec![0.5], false), Mode::Learn).unwrap();
        assert_eq!(learn.trim_end().split('\t').count(), 5);
    }

    #[test]
    fn rejects_invalid_records_before_write() {
        assert!(format_record(&record(vec![], vec![], true), Mode::Benchmark).is_err());
        assert!(format_record(&record(vec![1, 2], vec![0.5], true), Mode::Benchmark).is_err());
        assert!(format_record(&record(vec![1], vec![0.5], true), Mode::Learn).is_err());
        assert!(format_record(&record(vec![1], vec![0.5], false), Mode::Benchmark).is_err());
    }

    #[test]
    fn parse_reports_dropped_tab() {
        let mut text = format_header(&header(Mode::Benchmark)).unwrap();
        let line = format_record(&record(vec![1], vec![0.5], true), Mode::Benchmark).unwrap();
        text.push_str(&line.replacen('\t', "", 1));
        match parse_history_str(&text) {
            Err(HistoryError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_mode_column_mismatch() {
        let mut text = format_header(&header(Mode::Learn)).unwrap();
        text.push_str(&format_record(&record(vec![1], vec![0.5], true), Mode::Benchmark).unwrap());
        assert!(matches!(parse_history_str(&text), Err(HistoryError::Malformed { line: 3, .. })));
    }

    #[test]
    fn parse_rejects_broken_chains() {
        let base = format_header(&header(Mode::Learn)).unwrap();
        let r1 = format_record(&record(vec![1, 2], vec![0.5, 0.1], false), Mode::Learn).unwrap();
        let not_extending = format_record(&record(vec![1, 3, 4], vec![0.5, 0.1, 0.2], false), Mode::Learn).unwrap();
        assert!(parse_history_str(&(base.clone() + &r1 + &not_extending)).is_err());
        let mut slower = record(vec![1, 2, 5], vec![0.5, 0.1, 0.2], false);
        slower.runtime_cum = 1.0;
        let text = base + &r1 + &format_record(&slower, Mode::Learn).unwrap();
        assert!(matches!(parse_history_str(&text), Err(HistoryError::Malformed { line: 4, .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(history_file_name(Mode::Benchmark, SelectionMethod::Qbc));
        let h = header(Mode::Benchmark);
        write_header(&path, &h).unwrap();
        let r = record(vec![4, 0], vec![-1.25, 3e-7], true);
        append_record(&path, &r, Mode::Benchmark).unwrap();
        let (back_h, back_r) = parse_history(&path).unwrap();
        assert_eq!(back_h, h);
        assert_eq!(back_r, vec![r]);
        assert!(path.ends_with("output_benchmark_qbc.txt"));
    }

    #[test]
    fn snapshot_names() {
        assert_eq!(snapshot_name(SelectionMethod::Qbc, 3), "model_qbc_00003.json");
        assert_eq!(snapshot_name(SelectionMethod::Fft, 0), "model_fft_00000.json");
        let names: Vec<String> = [0, 9, 10, 99, 100, 12345].iter().map(|&i| snapshot_name(SelectionMethod::Random, i)).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
    }

    #[test]
    fn start_time_shape() {
        let h = RunHeader::now(Mode::Learn, SelectionMethod::Fft, 1, None);
        assert_eq!(h.start_time.len(), 15);
        assert_eq!(h.start_time.as_bytes()[8], b'-');
        let mut bad = h.clone();
        bad.start_time = "2026-10-16".into();
        assert!(format_header(&bad).is_err());
    }
}
