//! Gaussian-process regression: fitting, hyperparameter search, prediction
//! and snapshots.
//!
//! Targets are standardized inside the model, so kernel amplitudes live on a
//! unit scale regardless of the dataset. Predictions are mapped back to
//! target units.

mod optimize;
mod snapshot;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::dataset::FeatureMatrix;
use crate::kernels::{self, KernelError, KernelSpec};
use crate::par;

pub use optimize::{MAX_ITERATIONS, TOLERANCE};
pub use snapshot::{snapshot_load, snapshot_save, FORMAT_VERSION};

/// Standard deviations below this are treated as zero when standardizing.
pub const MIN_TARGET_STD: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("kernel matrix is not positive definite for {0:?}")]
    Degenerate(KernelSpec),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("no training samples")]
    Empty,
    #[error("{features} feature rows but {targets} targets")]
    LengthMismatch { features: usize, targets: usize },
    #[error("non-finite training target")]
    NonFinite,
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
    #[error("snapshot i/o on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Posterior mean and standard deviation in target units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    pub optimize: bool,
    /// Extra optimizer starts drawn log-uniformly within the bounds.
    pub restarts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { optimize: true, restarts: 2 }
    }
}

/// A fitted, immutable GP regressor.
#[derive(Debug, Clone)]
pub struct GpModel {
    spec: KernelSpec,
    train_indices: Vec<usize>,
    train_features: FeatureMatrix,
    train_targets: Vec<f64>,
    train_targets_std: Vec<f64>,
    target_mean: f64,
    target_std: f64,
    chol: DMatrix<f64>,
    dual: DVector<f64>,
    lml: f64,
}

/// Mean and population standard deviation, with the degenerate-variance
/// guard applied.
pub fn standardization(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std < MIN_TARGET_STD { 1.0 } else { std })
}

fn standardize(y: &[f64], mean: f64, std: f64) -> Vec<f64> {
    y.iter().map(|v| (v - mean) / std).collect()
}

fn factorize(spec: &KernelSpec, x: &FeatureMatrix) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(kernels::noisy_kernel_matrix(spec, x))
}

fn lml_from_factor(chol: &Cholesky<f64, nalgebra::Dyn>, y: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let l = chol.l_dirty();
    let log_det_half: f64 = (0..y.len()).map(|i| l[(i, i)].ln()).sum();
    -0.5 * y.dot(alpha) - log_det_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Log marginal likelihood of standardized targets and its gradient with
/// respect to `[ln σ_f², ln l, ln σ_n²]`.
pub fn log_marginal_likelihood(
    spec: &KernelSpec,
    x: &FeatureMatrix,
    y_std: &[f64],
) -> Result<(f64, [f64; 3]), GpError> {
    if x.nrows() != y_std.len() {
        return Err(GpError::LengthMismatch { features: x.nrows(), targets: y_std.len() });
    }
    if y_std.iter().any(|v| !v.is_finite()) {
        return Err(GpError::NonFinite);
    }
    let chol = factorize(spec, x).ok_or(GpError::Degenerate(*spec))?;
    let y = DVector::from_column_slice(y_std);
    let alpha = chol.solve(&y);
    let value = lml_from_factor(&chol, &y, &alpha);
    if !value.is_finite() {
        return Err(GpError::Degenerate(*spec));
    }

    // ½ tr((ααᵀ − K⁻¹) ∂K); both factors are symmetric.
    let inner = &alpha * alpha.transpose() - chol.inverse();
    let grads = kernels::kernel_gradient(spec, x);
    let gradient = grads.map(|dk| 0.5 * inner.component_mul(&dk).sum());
    Ok((value, gradient))
}

/// Fits a model on `x`/`y`. When `options.optimize` is set, hyperparameters
/// maximize the log marginal likelihood starting from `spec0` plus
/// `options.restarts` random starts drawn from `rng`. Training rows are
/// tagged with indices `0..n`; see [`GpModel::with_train_indices`].
pub fn fit(
    x: &FeatureMatrix,
    y: &[f64],
    spec0: &KernelSpec,
    options: &FitOptions,
    rng: &mut impl Rng,
) -> Result<GpModel, GpError> {
    if y.is_empty() {
        return Err(GpError::Empty);
    }
    if x.nrows() != y.len() {
        return Err(GpError::LengthMismatch { features: x.nrows(), targets: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(GpError::NonFinite);
    }
    spec0.validate()?;
    let (mean, std) = standardization(y);
    let spec = if options.optimize {
        let y_std = standardize(y, mean, std);
        optimize::maximize_lml(spec0, x, &y_std, options.restarts, rng)?
    } else {
        *spec0
    };
    GpModel::assemble(spec, (0..y.len()).collect(), x.clone(), y.to_vec(), mean, std)
}

impl GpModel {
    /// Builds a model with fixed hyperparameters and standardization
    /// constants, without any optimization.
    pub fn assemble(
        spec: KernelSpec,
        train_indices: Vec<usize>,
        train_features: FeatureMatrix,
        train_targets: Vec<f64>,
        target_mean: f64,
        target_std: f64,
    ) -> Result<Self, GpError> {
        if train_targets.is_empty() {
            return Err(GpError::Empty);
        }
        if train_features.nrows() != train_targets.len() || train_indices.len() != train_targets.len() {
            return Err(GpError::LengthMismatch {
                features: train_features.nrows(),
                targets: train_targets.len(),
            });
        }
        if !(target_std > 0.0 && target_std.is_finite() && target_mean.is_finite()) {
            return Err(GpError::NonFinite);
        }
        let y_std = standardize(&train_targets, target_mean, target_std);
        let chol = factorize(&spec, &train_features).ok_or(GpError::Degenerate(spec))?;
        let y = DVector::from_column_slice(&y_std);
        let dual = chol.solve(&y);
        let lml = lml_from_factor(&chol, &y, &dual);
        Ok(Self {
            spec,
            train_indices,
            train_features,
            train_targets,
            train_targets_std: y_std,
            target_mean,
            target_std,
            chol: chol.unpack(),
            dual,
            lml,
        })
    }

    pub fn with_train_indices(mut self, indices: Vec<usize>) -> Self {
        assert_eq!(indices.len(), self.train_targets.len(), "one index per training row");
        self.train_indices = indices;
        self
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train_indices
    }

    pub fn train_features(&self) -> &FeatureMatrix {
        &self.train_features
    }

    pub fn train_targets(&self) -> &[f64] {
        &self.train_targets
    }

    pub fn train_targets_std(&self) -> &[f64] {
        &self.train_targets_std
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn target_std(&self) -> f64 {
        self.target_std
    }

    /// Lower Cholesky factor of the noisy training matrix.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn dual(&self) -> &DVector<f64> {
        &self.dual
    }

    pub fn lml(&self) -> f64 {
        self.lml
    }

    /// Posterior at a single query row.
    pub fn predict_one(&self, q: &[f64]) -> Result<Prediction, GpError> {
        if q.len() != self.train_features.ncols() {
            return Err(KernelError::Dimension(q.len(), self.train_features.ncols()).into());
        }
        Ok(self.predict_unchecked(q))
    }

    fn predict_unchecked(&self, q: &[f64]) -> Prediction {
        let n = self.train_targets.len();
        let mut kstar: Vec<f64> = self
            .train_features
            .rows()
            .map(|xi| self.spec.at_distance(kernels::distance_unchecked(xi, q)))
            .collect();
        let mean_std: f64 = kstar.iter().zip(self.dual.iter()).map(|(k, a)| k * a).sum();

        // Forward substitution L v = k*, in place.
        for i in 0..n {
            let (solved, rest) = kstar.split_at_mut(i);
            let mut s = rest[0];
            for (j, v) in solved.iter().enumerate() {
                s -= self.chol[(i, j)] * v;
            }
            rest[0] = s / self.chol[(i, i)];
        }
        let explained: f64 = kstar.iter().map(|v| v * v).sum();
        let var = (self.spec.signal_variance + self.spec.noise_variance - explained).max(0.0);
        Prediction {
            mean: self.target_mean + self.target_std * mean_std,
            std: self.target_std * var.sqrt(),
        }
    }

    /// Posterior at every row of `queries`.
    pub fn predict(&self, queries: &FeatureMatrix) -> Result<Vec<Prediction>, GpError> {
        self.predict_rows(queries, &(0..queries.nrows()).collect::<Vec<_>>())
    }

    /// Posterior at the listed rows of `pool`, in list order.
    pub fn predict_rows(&self, pool: &FeatureMatrix, rows: &[usize]) -> Result<Vec<Prediction>, GpError> {
        if pool.ncols() != self.train_features.ncols() {
            return Err(KernelError::Dimension(pool.ncols(), self.train_features.ncols()).into());
        }
        Ok(par::map_slice(rows, |&i| self.predict_unchecked(pool.row(i))))
    }
}

#[cfg(test)]
mod tests;
