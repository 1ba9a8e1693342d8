//! Bounded quasi-Newton ascent of the log marginal likelihood in log space.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;

use super::{log_marginal_likelihood, GpError};
use crate::dataset::FeatureMatrix;
use crate::kernels::KernelSpec;

pub const MAX_ITERATIONS: usize = 200;
/// Stop once one accepted step changes the objective by less than this.
pub const TOLERANCE: f64 = 1e-9;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;
/// Largest change of any log-hyperparameter in one step.
const MAX_LOG_STEP: f64 = 2.0;

type Bounds3 = [(f64, f64); 3];

fn project(theta: Vector3<f64>, bounds: &Bounds3) -> Vector3<f64> {
    Vector3::from_fn(|i, _| theta[i].clamp(bounds[i].0, bounds[i].1))
}

/// Best hyperparameters over the warm start `spec0` and `restarts` random
/// starts. Ties keep the earlier start.
pub(super) fn maximize_lml(
    spec0: &KernelSpec,
    x: &FeatureMatrix,
    y_std: &[f64],
    restarts: usize,
    rng: &mut impl Rng,
) -> Result<KernelSpec, GpError> {
    let bounds = spec0.log_bounds();
    let mut starts = vec![Vector3::from(spec0.log_params())];
    for _ in 0..restarts {
        starts.push(Vector3::from_fn(|i, _| rng.random_range(bounds[i].0..=bounds[i].1)));
    }

    let eval = |theta: &Vector3<f64>| -> Option<(f64, Vector3<f64>)> {
        let spec = spec0.with_log_params((*theta).into());
        let (value, grad) = log_marginal_likelihood(&spec, x, y_std).ok()?;
        (value.is_finite() && grad.iter().all(|g| g.is_finite())).then(|| (value, Vector3::from(grad)))
    };

    let mut best: Option<(Vector3<f64>, f64)> = None;
    for start in starts {
        if let Some((theta, value)) = ascend(&eval, project(start, &bounds), &bounds) {
            if best.is_none_or(|(_, b)| value > b) {
                best = Some((theta, value));
            }
        }
    }
    let (theta, _) = best.ok_or_else(|| GpError::Degenerate(spec0.with_log_params(spec0.log_params())))?;
    Ok(spec0.with_log_params(theta.into()))
}

fn ascend(
    eval: &impl Fn(&Vector3<f64>) -> Option<(f64, Vector3<f64>)>,
    start: Vector3<f64>,
    bounds: &Bounds3,
) -> Option<(Vector3<f64>, f64)> {
    let mut theta = start;
    let (mut value, mut grad) = eval(&theta)?;
    // Inverse-Hessian estimate of the negated objective.
    let mut h = Matrix3::identity();

    for _ in 0..MAX_ITERATIONS {
        // Coordinates pinned at a bound with the gradient pointing outward
        // are frozen for this step.
        let free = Vector3::from_fn(|i, _| {
            let at_lo = theta[i] <= bounds[i].0 && grad[i] < 0.0;
            let at_hi = theta[i] >= bounds[i].1 && grad[i] > 0.0;
            if at_lo || at_hi { 0.0 } else { 1.0 }
        });
        let pg = grad.component_mul(&free);
        if pg.norm() == 0.0 {
            break;
        }
        let mut dir = (h * pg).component_mul(&free);
        if dir.dot(&pg) <= 0.0 {
            h = Matrix3::identity();
            dir = pg;
        }
        let longest = dir.amax();
        let mut alpha = if longest > MAX_LOG_STEP { MAX_LOG_STEP / longest } else { 1.0 };

        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = project(theta + dir * alpha, bounds);
            let step = candidate - theta;
            if step.amax() == 0.0 {
                break;
            }
            if let Some((v, g)) = eval(&candidate) {
                if v >= value + ARMIJO * grad.dot(&step) {
                    accepted = Some((candidate, step, v, g));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((next, step, next_value, next_grad)) = accepted else {
            break;
        };

        let y = grad - next_grad;
        let sy = step.dot(&y);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let left = Matrix3::identity() - step * y.transpose() * rho;
            let right = Matrix3::identity() - y * step.transpose() * rho;
            h = left * h * right + step * step.transpose() * rho;
        }

        let change = next_value - value;
        theta = next;
        value = next_value;
        grad = next_grad;
        if change.abs() < TOLERANCE {
            break;
        }
    }
    Some((theta, value))
}
