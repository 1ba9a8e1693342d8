//! Regression error metrics and the area under a metric-vs-iteration curve.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{predictions} predictions but {truths} truths")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("metric needs at least {0} values")]
    TooShort(usize),
    #[error("truth values have zero variance")]
    ZeroVariance,
    #[error("unknown metric {0:?}")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Rmse,
    R2,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rmse => "rmse",
            Self::R2 => "r2",
        }
    }

    /// Column title used in history headers.
    pub fn header_token(self) -> &'static str {
        match self {
            Self::Rmse => "RMSE",
            Self::R2 => "R2",
        }
    }

    pub fn from_header_token(token: &str) -> Option<Self> {
        match token {
            "RMSE" => Some(Self::Rmse),
            "R2" => Some(Self::R2),
            _ => None,
        }
    }

    pub fn evaluate(self, predictions: &[f64], truths: &[f64]) -> Result<f64, MetricError> {
        match self {
            Self::Rmse => rmse(predictions, truths),
            Self::R2 => r2(predictions, truths),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rmse" => Ok(Self::Rmse),
            "r2" => Ok(Self::R2),
            other => Err(MetricError::Unknown(other.to_owned())),
        }
    }
}

fn check(predictions: &[f64], truths: &[f64], min: usize) -> Result<(), MetricError> {
    if predictions.len() != truths.len() {
        return Err(MetricError::LengthMismatch { predictions: predictions.len(), truths: truths.len() });
    }
    if truths.len() < min {
        return Err(MetricError::TooShort(min));
    }
    Ok(())
}

pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64, MetricError> {
    check(predictions, truths, 1)?;
    let sse: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / truths.len() as f64).sqrt())
}

pub fn r2(predictions: &[f64], truths: &[f64]) -> Result<f64, MetricError> {
    check(predictions, truths, 2)?;
    let mean = truths.iter().sum::<f64>() / truths.len() as f64;
    let sst: f64 = truths.iter().map(|t| (t - mean) * (t - mean)).sum();
    if sst == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    let sse: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(1.0 - sse / sst)
}

/// Trapezoid with unit width between two consecutive metric values.
pub fn trapezoid(previous: f64, current: f64) -> f64 {
    (previous + current) / 2.0
}

/// Trapezoidal area under `series` with unit spacing. A single value has
/// zero area.
pub fn auc(series: &[f64]) -> Result<f64, MetricError> {
    if series.is_empty() {
        return Err(MetricError::TooShort(1));
    }
    Ok(series.windows(2).fold(0.0, |acc, w| acc + trapezoid(w[0], w[1])))
}
