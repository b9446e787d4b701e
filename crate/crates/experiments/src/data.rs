//! Datasets turned into network-ready `(input, label)` pairs.

use boltzlens_core::{NetworkSpec, Scalar, Tensor};
use boltzlens_synth::dataset::DatasetSplits;
use boltzlens_synth::{load_dataset, randomize_labels, SyntheticDataset};

use crate::config::{ExperimentConfig, LabelMode};
use crate::error::{ExperimentError, Result};

pub type Example<T> = (Tensor<T>, usize);

#[derive(Debug, Clone)]
pub struct PreparedData<T> {
    pub train: Vec<Example<T>>,
    pub test: Vec<Example<T>>,
}

fn convert<T: Scalar>(ds: &SyntheticDataset) -> Vec<Example<T>> {
    ds.samples.iter().map(|s| (s.input::<T>(), s.label as usize)).collect()
}

/// Applies the run's label mode and training-set limit.
///
/// Random labels are drawn once from the run seed and stay fixed across
/// epochs; train and test get independent draws.
pub fn prepare<T: Scalar>(splits: &DatasetSplits, cfg: &ExperimentConfig, spec: &NetworkSpec) -> Result<PreparedData<T>> {
    let want = spec.input_shape;
    if let Some(s) = splits.train.samples.iter().chain(&splits.test.samples).next() {
        let found = [s.pixels.shape()[0], s.pixels.shape()[1], 1];
        if found != want {
            return Err(ExperimentError::DataMismatch(format!(
                "samples are {found:?} but {} expects {want:?}",
                cfg.preset
            )));
        }
    }
    let mut train = match cfg.train_limit {
        Some(n) => splits.train.truncated(n),
        None => splits.train.clone(),
    };
    let mut test = splits.test.clone();
    if cfg.labels == LabelMode::Random {
        train = randomize_labels(&train, cfg.seed);
        test = randomize_labels(&test, cfg.seed);
    }
    if train.is_empty() {
        return Err(ExperimentError::DataMismatch("training split is empty".into()));
    }
    let classes = spec.num_classes();
    if let Some(bad) = train.samples.iter().chain(&test.samples).find(|s| s.label as usize >= classes) {
        return Err(ExperimentError::DataMismatch(format!("label {} but the network has {classes} classes", bad.label)));
    }
    Ok(PreparedData {
        train: convert(&train),
        test: convert(&test),
    })
}

pub fn load_prepared<T: Scalar>(cfg: &ExperimentConfig, spec: &NetworkSpec) -> Result<PreparedData<T>> {
    let (splits, _) = load_dataset(&cfg.data)?;
    prepare(&splits, cfg, spec)
}
