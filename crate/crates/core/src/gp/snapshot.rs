//! JSON model snapshots.
//!
//! Only the training data, hyperparameters and standardization constants are
//! stored. The Cholesky factor and dual weights are rebuilt on load.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GpError, GpModel};
use crate::dataset::FeatureMatrix;
use crate::kernels::{KernelKind, KernelSpec};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelRecord {
    kind: KernelKind,
    signal_variance: f64,
    length_scale: f64,
    noise_variance: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Snapshot {
    format_version: u32,
    kernel: KernelRecord,
    train_indices: Vec<usize>,
    train_features: Vec<Vec<f64>>,
    train_targets: Vec<f64>,
    target_mean: f64,
    target_std: f64,
}

pub fn snapshot_save(model: &GpModel, path: impl AsRef<Path>) -> Result<(), GpError> {
    let spec = model.spec();
    let snap = Snapshot {
        format_version: FORMAT_VERSION,
        kernel: KernelRecord {
            kind: spec.kind,
            signal_variance: spec.signal_variance,
            length_scale: spec.length_scale,
            noise_variance: spec.noise_variance,
        },
        train_indices: model.train_indices().to_vec(),
        train_features: model.train_features().to_rows(),
        train_targets: model.train_targets().to_vec(),
        target_mean: model.target_mean(),
        target_std: model.target_std(),
    };
    let mut text = serde_json::to_string_pretty(&snap).expect("snapshot serializes");
    text.push('\n');
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|source| GpError::Io { path: path.to_path_buf(), source })
}

pub fn snapshot_load(path: impl AsRef<Path>) -> Result<GpModel, GpError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GpError::Io { path: path.to_path_buf(), source })?;
    snapshot_from_str(&text)
}

pub(crate) fn snapshot_from_str(text: &str) -> Result<GpModel, GpError> {
    let snap: Snapshot = serde_json::from_str(text).map_err(|e| GpError::Snapshot(e.to_string()))?;
    if snap.format_version != FORMAT_VERSION {
        return Err(GpError::Snapshot(format!(
            "format_version {} (expected {FORMAT_VERSION})",
            snap.format_version
        )));
    }
    let k = snap.kernel;
    let spec = KernelSpec::with_params(k.kind, k.signal_variance, k.length_scale, k.noise_variance)
        .map_err(|e| GpError::Snapshot(e.to_string()))?;
    let features = FeatureMatrix::from_rows(&snap.train_features).map_err(|e| GpError::Snapshot(e.to_string()))?;
    GpModel::assemble(
        spec,
        snap.train_indices,
        features,
        snap.train_targets,
        snap.target_mean,
        snap.target_std,
    )
}
