//! Label sources for learn mode.

use std::io::{BufRead, Write};
use std::process::{Command, Stdio};

use thiserror::Error;

use crate::dataset::LabelVector;
use crate::decimal;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("no label for sample {0}")]
    MissingLabel(usize),
    #[error("oracle answered {0:?}, expected one decimal number")]
    NotANumber(String),
    #[error("oracle gave no answer")]
    NoResponse,
    #[error("oracle command {command:?} failed: {reason}")]
    Command { command: String, reason: String },
    #[error("oracle i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

/// Anything that can label a pool sample. Calls are strictly sequential.
pub trait Oracle {
    fn label(&mut self, features: &[f64], index: usize) -> Result<f64, OracleError>;
}

impl<F> Oracle for F
where
    F: FnMut(&[f64], usize) -> Result<f64, OracleError>,
{
    fn label(&mut self, features: &[f64], index: usize) -> Result<f64, OracleError> {
        self(features, index)
    }
}

fn parse_answer(line: &str) -> Result<f64, OracleError> {
    decimal::parse(line).ok_or_else(|| OracleError::NotANumber(line.trim_end().to_owned()))
}

/// Reads labels from a known label vector.
#[derive(Debug, Clone)]
pub struct Lookup {
    labels: LabelVector,
}

impl Lookup {
    pub fn new(labels: LabelVector) -> Self {
        Self { labels }
    }
}

impl Oracle for Lookup {
    fn label(&mut self, _features: &[f64], index: usize) -> Result<f64, OracleError> {
        self.labels.values().get(index).copied().ok_or(OracleError::MissingLabel(index))
    }
}

/// Asks a person: writes a prompt line, reads one decimal line back.
pub struct Prompt<R, W> {
    input: R,
    output: W,
}

/// Components shown in a prompt before eliding the rest.
pub const PROMPT_FEATURES: usize = 8;

impl<R: BufRead, W: Write> Prompt<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self { input, output }
    }
}

impl Prompt<std::io::StdinLock<'static>, std::io::Stderr> {
    /// Prompts on standard error and reads standard input.
    pub fn stdio() -> Self {
        Self::new(std::io::stdin().lock(), std::io::stderr())
    }
}

pub fn prompt_text(features: &[f64], index: usize) -> String {
    let mut shown: Vec<String> = features.iter().take(PROMPT_FEATURES).map(|v| decimal::format(*v)).collect();
    if features.len() > PROMPT_FEATURES {
        shown.push("...".into());
    }
    format!("label sample {index}: {} ? ", shown.join(", "))
}

impl<R: BufRead, W: Write> Oracle for Prompt<R, W> {
    fn label(&mut self, features: &[f64], index: usize) -> Result<f64, OracleError> {
        self.output.write_all(prompt_text(features, index).as_bytes())?;
        self.output.flush()?;
        let mut line = String::new();
        if self.input.read_line(&mut line)? == 0 {
            return Err(OracleError::NoResponse);
        }
        parse_answer(&line)
    }
}

/// Runs a shell command once per query: the features go to its standard
/// input as `v1,v2,...,vN\n`, the label is the first line of its output.
#[derive(Debug, Clone)]
pub struct CommandOracle {
    command: String,
}

impl CommandOracle {
    pub fn new(command: impl Into<String>) -> Self {
        Self { command: command.into() }
    }
}

pub fn command_input(features: &[f64]) -> String {
    let mut line = features.iter().map(|v| decimal::format(*v)).collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

impl Oracle for CommandOracle {
    fn label(&mut self, features: &[f64], _index: usize) -> Result<f64, OracleError> {
        let fail = |reason: String| OracleError::Command { command: self.command.clone(), reason };
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| fail(e.to_string()))?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            // A child that exits without reading closes the pipe; its exit
            // status and output decide the outcome.
            let _ = stdin.write_all(command_input(features).as_bytes());
        }
        let out = child.wait_with_output().map_err(|e| fail(e.to_string()))?;
        if !out.status.success() {
            return Err(fail(format!("exit status {}", out.status)));
        }
        let stdout = String::from_utf8_lossy(&out.stdout);
        let first = stdout.lines().next().ok_or(OracleError::NoResponse)?;
        parse_answer(first)
    }
}

/// The three built-in label sources.
pub enum OracleKind {
    Lookup(Lookup),
    Prompt(Prompt<Box<dyn BufRead>, Box<dyn Write>>),
    Command(CommandOracle),
}

impl Oracle for OracleKind {
    fn label(&mut self, features: &[f64], index: usize) -> Result<f64, OracleError> {
        match self {
            Self::Lookup(o) => o.label(features, index),
            Self::Prompt(o) => o.label(features, index),
            Self::Command(o) => o.label(features, index),
        }
    }
}
