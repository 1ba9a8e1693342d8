//! Pool-based active learning for regression.
//!
//! A Gaussian-process regressor is trained while the next sample to label is
//! chosen from a fixed pool by one of five strategies (`random`, `uncertainty`,
//! `covariance`, `qbc`, `fft`). Experiments run either in benchmark mode,
//! where all labels are known and revealed one at a time, or in learn mode,
//! where labels come from an [`oracle::Oracle`]. Every run writes a
//! tab-separated history file plus one model snapshot per iteration, which is
//! enough to resume the experiment later.
//!
//! With the default `parallel` feature, kernel-matrix assembly, pool-wide
//! prediction and candidate scoring run on rayon. Disabling it gives a purely
//! sequential build with bitwise identical results.

pub mod dataset;
pub mod decimal;
pub mod experiment;
pub mod gp;
pub mod history;
pub mod kernels;
pub mod metrics;
pub mod oracle;
pub mod par;
pub mod rng;
pub mod selection;

pub use dataset::{FeatureMatrix, IndexSets, LabelVector};
pub use experiment::{ExperimentConfig, InitialSet, Mode};
pub use gp::{GpModel, Prediction};
pub use kernels::{KernelKind, KernelSpec};
pub use metrics::MetricKind;
pub use selection::{Committee, SelectionMethod};
