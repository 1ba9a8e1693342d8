//! Pool-based sample selection strategies.
//!
//! Every selector returns one element of the candidate (unlabeled) set and
//! breaks score ties toward the smallest pool index.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::dataset::FeatureMatrix;
use crate::gp::{GpError, GpModel};
use crate::kernels::{self, KernelKind, KernelSpec};
use crate::par;

/// Above this many unlabeled samples the covariance cache keeps only the
/// running sums and recomputes one covariance column per removal.
pub const COVARIANCE_MATRIX_LIMIT: usize = 8192;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("unlabeled pool is empty")]
    EmptyPool,
    #[error("farthest-first traversal needs at least one labeled sample")]
    EmptyLabeled,
    #[error("committee needs at least 2 members, got {0}")]
    CommitteeTooSmall(usize),
    #[error("committee members {0} and {1} are identical")]
    DuplicateMember(usize, usize),
    #[error("feature covariance needs at least 2 feature dimensions, got {0}")]
    TooFewFeatures(usize),
    #[error("feature rows differ in length: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("covariance cache is out of sync with the unlabeled set")]
    StaleCache,
    #[error("index {0} is not in the covariance cache")]
    NotInCache(usize),
    #[error("unknown selection method {0:?}")]
    UnknownMethod(String),
    #[error(transparent)]
    Gp(#[from] GpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SelectionMethod {
    Random,
    Uncertainty,
    Covariance,
    Qbc,
    Fft,
}

impl SelectionMethod {
    pub const ALL: [Self; 5] = [Self::Random, Self::Uncertainty, Self::Covariance, Self::Qbc, Self::Fft];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Uncertainty => "uncertainty",
            Self::Covariance => "covariance",
            Self::Qbc => "qbc",
            Self::Fft => "fft",
        }
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionMethod {
    type Err = SelectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| SelectionError::UnknownMethod(s.to_owned()))
    }
}

/// Kernel specs of the query-by-committee members.
#[derive(Debug, Clone, PartialEq)]
pub struct Committee(Vec<KernelSpec>);

impl Committee {
    pub fn new(members: Vec<KernelSpec>) -> Result<Self, SelectionError> {
        if members.len() < 2 {
            return Err(SelectionError::CommitteeTooSmall(members.len()));
        }
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                if members[i] == members[j] {
                    return Err(SelectionError::DuplicateMember(i, j));
                }
            }
        }
        Ok(Self(members))
    }

    pub fn members(&self) -> &[KernelSpec] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Committee {
    /// Matérn 1/2, Matérn 3/2 and RBF, each with a fitted amplitude.
    fn default() -> Self {
        Self(vec![
            KernelSpec::new(KernelKind::MaternHalf),
            KernelSpec::new(KernelKind::MaternThreeHalves),
            KernelSpec::new(KernelKind::Rbf),
        ])
    }
}

/// Index with the largest score; equal scores go to the smaller index.
fn argmax(candidates: &[usize], scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (&idx, &s) in candidates.iter().zip(scores) {
        best = match best {
            Some((bi, bs)) if s < bs || (s == bs && idx > bi) || s.is_nan() => Some((bi, bs)),
            _ => Some((idx, s)),
        };
    }
    best.map(|(i, _)| i)
}

/// Sample covariance between the components of two feature rows.
pub fn feature_covariance(a: &[f64], b: &[f64]) -> Result<f64, SelectionError> {
    if a.len() != b.len() {
        return Err(SelectionError::Dimension(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(SelectionError::TooFewFeatures(a.len()));
    }
    Ok(centered_dot(&center(a), &center(b)))
}

fn center(row: &[f64]) -> Vec<f64> {
    let mean = row.iter().sum::<f64>() / row.len() as f64;
    row.iter().map(|v| v - mean).collect()
}

fn centered_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (a.len() - 1) as f64
}

/// Highest predictive standard deviation.
pub fn select_uncertainty(model: &GpModel, x: &FeatureMatrix, candidates: &[usize]) -> Result<usize, SelectionError> {
    if candidates.is_empty() {
        return Err(SelectionError::EmptyPool);
    }
    let stds: Vec<f64> = model.predict_rows(x, candidates)?.iter().map(|p| p.std).collect();
    Ok(argmax(candidates, &stds).expect("nonempty"))
}

/// Running per-sample sums of feature covariance with every other
/// unlabeled sample.
#[derive(Debug, Clone)]
pub struct CovarianceCache {
    /// Pool indices covered at construction, ascending.
    indices: Vec<usize>,
    /// Mean-centered feature rows, aligned with `indices`.
    centered: Vec<Vec<f64>>,
    sums: Vec<f64>,
    alive: Vec<bool>,
    live: usize,
    /// Row-major pairwise covariances when the pool is small enough.
    matrix: Option<Vec<f64>>,
}

impl CovarianceCache {
    pub fn init(x: &FeatureMatrix, unlabeled: &[usize]) -> Result<Self, SelectionError> {
        Self::init_with_limit(x, unlabeled, COVARIANCE_MATRIX_LIMIT)
    }

    /// As [`Self::init`] with an explicit size limit for the stored matrix.
    pub fn init_with_limit(x: &FeatureMatrix, unlabeled: &[usize], matrix_limit: usize) -> Result<Self, SelectionError> {
        if x.ncols() < 2 {
            return Err(SelectionError::TooFewFeatures(x.ncols()));
        }
        let mut indices = unlabeled.to_vec();
        indices.sort_unstable();
        indices.dedup();
        let m = indices.len();
        let centered: Vec<Vec<f64>> = par::map_slice(&indices, |&i| center(x.row(i)));

        let (sums, matrix) = if m <= matrix_limit {
            let rows = par::map_indexed(m, |i| {
                (0..m).map(|j| centered_dot(&centered[i], &centered[j])).collect::<Vec<_>>()
            });
            let sums = rows
                .iter()
                .enumerate()
                .map(|(i, row)| row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v).sum())
                .collect();
            (sums, Some(rows.concat()))
        } else {
            let sums = par::map_indexed(m, |i| {
                (0..m)
                    .filter(|&j| j != i)
                    .map(|j| centered_dot(&centered[i], &centered[j]))
                    .sum()
            });
            (sums, None)
        };
        Ok(Self { indices, centered, sums, alive: vec![true; m], live: m, matrix })
    }

    fn position(&self, index: usize) -> Option<usize> {
        self.indices.binary_search(&index).ok().filter(|&p| self.alive[p])
    }

    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    pub fn contains(&self, index: usize) -> bool {
        self.position(index).is_some()
    }

    /// Current sum for `index`, if cached.
    pub fn sum(&self, index: usize) -> Option<f64> {
        self.position(index).map(|p| self.sums[p])
    }

    /// Whether a full pairwise matrix is stored.
    pub fn has_matrix(&self) -> bool {
        self.matrix.is_some()
    }

    /// Drops `index` and subtracts its covariance from every remaining sum.
    pub fn remove(&mut self, index: usize) -> Result<(), SelectionError> {
        let r = self.position(index).ok_or(SelectionError::NotInCache(index))?;
        self.alive[r] = false;
        self.live -= 1;
        let m = self.indices.len();
        match &self.matrix {
            Some(matrix) => {
                for k in (0..m).filter(|&k| self.alive[k]) {
                    self.sums[k] -= matrix[k * m + r];
                }
            }
            None => {
                let removed = &self.centered[r];
                let column = par::map_indexed(m, |k| {
                    if self.alive[k] { centered_dot(&self.centered[k], removed) } else { 0.0 }
                });
                for k in (0..m).filter(|&k| self.alive[k]) {
                    self.sums[k] -= column[k];
                }
            }
        }
        Ok(())
    }
}

/// Highest product of predictive standard deviation and covariance sum. A
/// single remaining candidate is returned directly.
pub fn select_covariance(
    model: &GpModel,
    x: &FeatureMatrix,
    candidates: &[usize],
    cache: &CovarianceCache,
) -> Result<usize, SelectionError> {
    match candidates {
        [] => return Err(SelectionError::EmptyPool),
        [only] => return Ok(*only),
        _ => {}
    }
    if cache.len() != candidates.len() {
        return Err(SelectionError::StaleCache);
    }
    let sums = candidates
        .iter()
        .map(|&i| cache.sum(i).ok_or(SelectionError::StaleCache))
        .collect::<Result<Vec<_>, _>>()?;
    let preds = model.predict_rows(x, candidates)?;
    let scores: Vec<f64> = preds.iter().zip(&sums).map(|(p, s)| p.std * s).collect();
    Ok(argmax(candidates, &scores).expect("nonempty"))
}

/// Largest spread between the highest and lowest committee mean.
pub fn select_qbc(committee: &[GpModel], x: &FeatureMatrix, candidates: &[usize]) -> Result<usize, SelectionError> {
    if committee.len() < 2 {
        return Err(SelectionError::CommitteeTooSmall(committee.len()));
    }
    if candidates.is_empty() {
        return Err(SelectionError::EmptyPool);
    }
    let means = committee
        .iter()
        .map(|m| Ok(m.predict_rows(x, candidates)?.into_iter().map(|p| p.mean).collect()))
        .collect::<Result<Vec<Vec<f64>>, GpError>>()?;
    let spread: Vec<f64> = (0..candidates.len())
        .map(|c| {
            let (lo, hi) = means
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m[c]), hi.max(m[c])));
            hi - lo
        })
        .collect();
    Ok(argmax(candidates, &spread).expect("nonempty"))
}

/// Uniform draw over the candidates, taken in ascending index order.
pub fn select_random(candidates: &[usize], rng: &mut impl Rng) -> Result<usize, SelectionError> {
    if candidates.is_empty() {
        return Err(SelectionError::EmptyPool);
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    Ok(sorted[rng.random_range(0..sorted.len())])
}

/// Candidate farthest from its nearest labeled sample.
pub fn select_fft(x: &FeatureMatrix, labeled: &[usize], candidates: &[usize]) -> Result<usize, SelectionError> {
    if labeled.is_empty() {
        return Err(SelectionError::EmptyLabeled);
    }
    if candidates.is_empty() {
        return Err(SelectionError::EmptyPool);
    }
    let nearest = par::map_slice(candidates, |&c| {
        labeled
            .iter()
            .map(|&l| kernels::distance_unchecked(x.row(c), x.row(l)))
            .fold(f64::INFINITY, f64::min)
    });
    Ok(argmax(candidates, &nearest).expect("nonempty"))
}
