//! Training runs and the studies built on them: per-image layer reports,
//! the width sweep over the three presets, and random-label training.

pub mod config;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod metrics;
pub mod report;
pub mod sweep;
pub mod train;
pub mod verify;

pub use config::{ExperimentConfig, LabelMode};
pub use error::{ExperimentError, Result};
pub use evaluate::{evaluate, mean_first_layer_kl};
pub use metrics::{EpochMetrics, MetricsLog};
pub use report::{single_image_report, write_report};
pub use sweep::{width_sweep, SweepResult, SweepRun};
pub use train::{run_training, train_prepared, TrainingOutcome};
pub use verify::{run_verify, Check};
