//! Stationary covariance kernels (scaled RBF and Matérn 1/2, 3/2).

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::FeatureMatrix;
use crate::par;

/// Constant added to every training-matrix diagonal on top of the noise
/// variance.
pub const JITTER: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("invalid kernel hyperparameters: {0}")]
    InvalidSpec(String),
    #[error("unknown kernel kind {0:?}")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Rbf,
    MaternHalf,
    MaternThreeHalves,
}

impl KernelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rbf => "rbf",
            Self::MaternHalf => "matern_half",
            Self::MaternThreeHalves => "matern_three_halves",
        }
    }

    /// Unit-amplitude correlation at distance `d` for length scale `l`.
    fn correlation(self, d: f64, l: f64) -> f64 {
        match self {
            Self::Rbf => (-d * d / (2.0 * l * l)).exp(),
            Self::MaternHalf => (-d / l).exp(),
            Self::MaternThreeHalves => {
                let a = 3f64.sqrt() * d / l;
                (1.0 + a) * (-a).exp()
            }
        }
    }

    /// Derivative of [`Self::correlation`] with respect to `ln l`.
    fn correlation_dlog_length(self, d: f64, l: f64) -> f64 {
        match self {
            Self::Rbf => {
                let r2 = d * d / (l * l);
                (-0.5 * r2).exp() * r2
            }
            Self::MaternHalf => {
                let r = d / l;
                (-r).exp() * r
            }
            Self::MaternThreeHalves => {
                let a = 3f64.sqrt() * d / l;
                a * a * (-a).exp()
            }
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = KernelError;

    /// Accepts the canonical names plus the `matern12`/`matern32` shorthands.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rbf" => Ok(Self::Rbf),
            "matern_half" | "matern12" => Ok(Self::MaternHalf),
            "matern_three_halves" | "matern32" => Ok(Self::MaternThreeHalves),
            other => Err(KernelError::UnknownKind(other.to_owned())),
        }
    }
}

/// Closed positive interval for one hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    fn is_valid(&self) -> bool {
        self.lower > 0.0 && self.upper.is_finite() && self.lower <= self.upper
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.lower..=self.upper).contains(&v)
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }

    pub fn log_lower(&self) -> f64 {
        self.lower.ln()
    }

    pub fn log_upper(&self) -> f64 {
        self.upper.ln()
    }
}

/// Kernel family, hyperparameters and their optimization bounds.
///
/// `noise_variance` may be exactly zero for a noise-free model; any positive
/// value must lie in `noise_bounds`. Optimization clamps zero up to the lower
/// bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub signal_variance: f64,
    pub length_scale: f64,
    pub noise_variance: f64,
    pub signal_bounds: Bounds,
    pub length_bounds: Bounds,
    pub noise_bounds: Bounds,
}

impl KernelSpec {
    pub const DEFAULT_SIGNAL_BOUNDS: Bounds = Bounds::new(1e-5, 1e5);
    pub const DEFAULT_LENGTH_BOUNDS: Bounds = Bounds::new(1e-5, 1e5);
    pub const DEFAULT_NOISE_BOUNDS: Bounds = Bounds::new(1e-10, 1e1);

    /// Unit amplitude and length scale, noise variance 1e-5, default bounds.
    pub fn new(kind: KernelKind) -> Self {
        Self {
            kind,
            signal_variance: 1.0,
            length_scale: 1.0,
            noise_variance: 1e-5,
            signal_bounds: Self::DEFAULT_SIGNAL_BOUNDS,
            length_bounds: Self::DEFAULT_LENGTH_BOUNDS,
            noise_bounds: Self::DEFAULT_NOISE_BOUNDS,
        }
    }

    pub fn with_params(
        kind: KernelKind,
        signal_variance: f64,
        length_scale: f64,
        noise_variance: f64,
    ) -> Result<Self, KernelError> {
        let spec = Self {
            signal_variance,
            length_scale,
            noise_variance,
            ..Self::new(kind)
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let bad = |m: &str| Err(KernelError::InvalidSpec(m.to_owned()));
        if !(self.signal_bounds.is_valid() && self.length_bounds.is_valid() && self.noise_bounds.is_valid()) {
            return bad("bounds must be positive finite intervals");
        }
        if !self.signal_bounds.contains(self.signal_variance) {
            return bad("signal variance outside bounds");
        }
        if !self.length_bounds.contains(self.length_scale) {
            return bad("length scale outside bounds");
        }
        if self.noise_variance != 0.0 && !self.noise_bounds.contains(self.noise_variance) {
            return bad("noise variance outside bounds");
        }
        Ok(())
    }

    /// `[ln σ_f², ln l, ln σ_n²]`.
    pub fn log_params(&self) -> [f64; 3] {
        [self.signal_variance.ln(), self.length_scale.ln(), self.noise_variance.ln()]
    }

    /// Log-space box `[(lo, hi); 3]` matching [`Self::log_params`].
    pub fn log_bounds(&self) -> [(f64, f64); 3] {
        [&self.signal_bounds, &self.length_bounds, &self.noise_bounds]
            .map(|b| (b.log_lower(), b.log_upper()))
    }

    /// Copy with hyperparameters set from log space, clamped into bounds.
    pub fn with_log_params(&self, theta: [f64; 3]) -> Self {
        Self {
            signal_variance: self.signal_bounds.clamp(theta[0].exp()),
            length_scale: self.length_bounds.clamp(theta[1].exp()),
            noise_variance: self.noise_bounds.clamp(theta[2].exp()),
            ..*self
        }
    }

    /// Noise-free covariance at distance `d`.
    pub fn at_distance(&self, d: f64) -> f64 {
        self.signal_variance * self.kind.correlation(d, self.length_scale)
    }
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64, KernelError> {
    if a.len() != b.len() {
        return Err(KernelError::Dimension(a.len(), b.len()));
    }
    Ok(distance_unchecked(a, b))
}

pub(crate) fn distance_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Noise-free kernel value between two feature rows.
pub fn kernel_eval(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64, KernelError> {
    Ok(spec.at_distance(euclidean_distance(a, b)?))
}

/// Cross-covariance matrix `K(a, b)` without noise.
pub fn kernel_matrix(
    spec: &KernelSpec,
    a: &FeatureMatrix,
    b: &FeatureMatrix,
) -> Result<DMatrix<f64>, KernelError> {
    if a.ncols() != b.ncols() {
        return Err(KernelError::Dimension(a.ncols(), b.ncols()));
    }
    let (n, m) = (a.nrows(), b.nrows());
    // Column-major: column j holds K(a_i, b_j) for all i.
    let columns = par::map_indexed(m, |j| {
        let bj = b.row(j);
        a.rows().map(|ai| spec.at_distance(distance_unchecked(ai, bj))).collect::<Vec<_>>()
    });
    Ok(DMatrix::from_vec(n, m, columns.concat()))
}

/// Training matrix `K(x, x) + (σ_n² + jitter) I`.
pub fn noisy_kernel_matrix(spec: &KernelSpec, x: &FeatureMatrix) -> DMatrix<f64> {
    let mut k = kernel_matrix(spec, x, x).expect("same matrix has matching dimensions");
    for i in 0..x.nrows() {
        k[(i, i)] += spec.noise_variance + JITTER;
    }
    k
}

/// Derivatives of the noisy training matrix with respect to
/// `ln σ_f²`, `ln l` and `ln σ_n²`, in that order.
pub fn kernel_gradient(spec: &KernelSpec, x: &FeatureMatrix) -> [DMatrix<f64>; 3] {
    let n = x.nrows();
    let mut d_signal = DMatrix::zeros(n, n);
    let mut d_length = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let d = distance_unchecked(x.row(i), x.row(j));
            d_signal[(i, j)] = spec.at_distance(d);
            d_length[(i, j)] =
                spec.signal_variance * spec.kind.correlation_dlog_length(d, spec.length_scale);
        }
    }
    let d_noise = DMatrix::identity(n, n) * spec.noise_variance;
    [d_signal, d_length, d_noise]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> FeatureMatrix {
        let v = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        FeatureMatrix::from_vec(n, d, v).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(euclidean_distance(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert_eq!(euclidean_distance(&[1.0], &[1.0, 2.0]), Err(KernelError::Dimension(1, 2)));
    }

    #[test]
    fn distance_matches_scalar_loop_in_225_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(225);
        let a: Vec<f64> = (0..225).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..225).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut acc = 0.0;
        for k in 0..225 {
            let diff = a[k] - b[k];
            acc += diff * diff;
        }
        assert_close(euclidean_distance(&a, &b).unwrap(), acc.sqrt(), 1e-12);
    }

    #[test]
    fn kernel_eval_examples() {
        let rbf = KernelSpec::with_params(KernelKind::Rbf, 2.5, 0.7, 0.0).unwrap();
        assert_eq!(kernel_eval(&rbf, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 2.5);

        let unit = KernelSpec::with_params(KernelKind::Rbf, 1.0, 1.0, 0.0).unwrap();
        assert_close(kernel_eval(&unit, &[0.0, 0.0], &[1.0, 1.0]).unwrap(), (-1f64).exp(), 1e-15);

        let m12 = KernelSpec::with_params(KernelKind::MaternHalf, 2.0, 2.0, 0.0).unwrap();
        assert_close(kernel_eval(&m12, &[0.0], &[2.0]).unwrap(), 2.0 * (-1f64).exp(), 1e-15);

        let m32 = KernelSpec::with_params(KernelKind::MaternThreeHalves, 1.0, 1.0, 0.0).unwrap();
        let a = 3f64.sqrt();
        assert_close(kernel_eval(&m32, &[0.0], &[1.0]).unwrap(), (1.0 + a) * (-a).exp(), 1e-15);
    }

    #[test]
    fn single_row_noisy_matrix() {
        let spec = KernelSpec::with_params(KernelKind::Rbf, 1.0, 1.0, 0.0).unwrap();
        let x = FeatureMatrix::from_rows(&[vec![0.3, 0.1]]).unwrap();
        assert_eq!(noisy_kernel_matrix(&spec, &x)[(0, 0)], 1.0 + 1e-10);
    }

    #[test]
    fn matrix_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_matrix(&mut rng, 4, 3);
        for kind in [KernelKind::Rbf, KernelKind::MaternHalf, KernelKind::MaternThreeHalves] {
            let spec = KernelSpec::with_params(kind, 1.3, 0.8, 0.0).unwrap();
            let k = kernel_matrix(&spec, &x, &x).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    let mut s = 0.0;
                    for c in 0..3 {
                        s += (x.row(i)[c] - x.row(j)[c]).powi(2);
                    }
                    let d = s.sqrt();
                    let expect = match kind {
                        KernelKind::Rbf => 1.3 * (-d * d / (2.0 * 0.64)).exp(),
                        KernelKind::MaternHalf => 1.3 * (-d / 0.8).exp(),
                        KernelKind::MaternThreeHalves => {
                            let a = 3f64.sqrt() * d / 0.8;
                            1.3 * (1.0 + a) * (-a).exp()
                        }
                    };
                    assert_close(k[(i, j)], expect, 1e-12);
                }
            }
            assert_eq!(k, k.transpose());
        }
    }

    #[test]
    fn cross_matrix_dimension_mismatch() {
        let a = FeatureMatrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let b = FeatureMatrix::from_rows(&[vec![0.0]]).unwrap();
        let spec = KernelSpec::new(KernelKind::Rbf);
        assert_eq!(kernel_matrix(&spec, &a, &b), Err(KernelError::Dimension(2, 1)));
    }

    #[test]
    fn gradient_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_matrix(&mut rng, 3, 2);
        for kind in [KernelKind::Rbf, KernelKind::MaternHalf, KernelKind::MaternThreeHalves] {
            let spec = KernelSpec::with_params(kind, 1.7, 0.9, 0.03).unwrap();
            let [ds, _, dn] = kernel_gradient(&spec, &x);
            assert_eq!(ds, kernel_matrix(&spec, &x, &x).unwrap());
            assert_eq!(dn, DMatrix::identity(3, 3) * 0.03);
        }
    }

    #[test]
    fn length_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_matrix(&mut rng, 3, 2);
        let h = 1e-6;
        for kind in [KernelKind::Rbf, KernelKind::MaternHalf, KernelKind::MaternThreeHalves] {
            let spec = KernelSpec::with_params(kind, 1.2, 0.7, 0.01).unwrap();
            let [_, dl, _] = kernel_gradient(&spec, &x);
            let theta = spec.log_params();
            let shifted = |delta: f64| {
                let mut t = theta;
                t[1] += delta;
                noisy_kernel_matrix(&spec.with_log_params(t), &x)
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            for (a, b) in dl.iter().zip(fd.iter()) {
                if a.abs() > 1e-8 {
                    assert!(((a - b) / a).abs() < 1e-5, "{kind}: {a} vs {b}");
                } else {
                    assert!(b.abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::with_params(KernelKind::Rbf, 0.0, 1.0, 0.0).is_err());
        assert!(KernelSpec::with_params(KernelKind::Rbf, 1.0, 1e6, 0.0).is_err());
        assert!(KernelSpec::with_params(KernelKind::Rbf, 1.0, 1.0, 100.0).is_err());
        assert_eq!("matern32".parse::<KernelKind>(), Ok(KernelKind::MaternThreeHalves));
        assert!("periodic".parse::<KernelKind>().is_err());
    }

    proptest! {
        #[test]
        fn self_covariance_and_monotone(sv in 1e-3f64..1e3, l in 1e-2f64..1e2, d1 in 0f64..10.0, d2 in 0f64..10.0) {
            for kind in [KernelKind::Rbf, KernelKind::MaternHalf, KernelKind::MaternThreeHalves] {
                let spec = KernelSpec::with_params(kind, sv, l, 0.0).unwrap();
                prop_assert_eq!(kernel_eval(&spec, &[d1, 1.0], &[d1, 1.0]).unwrap(), sv);
                let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
                prop_assert!(spec.at_distance(near) >= spec.at_distance(far));
            }
        }
    }
}
