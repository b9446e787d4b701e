//! Mini-batch SGD training with per-epoch evaluation and checkpointing.

use std::fs;
use std::path::Path;
use std::time::Instant;

use boltzlens_core::checkpoint;
use boltzlens_core::rng::{derive_seed, seeded};
use boltzlens_core::{init_params, loss_and_gradients, sgd_step, Gradients, Network, Scalar};
use rand::seq::SliceRandom;

use crate::config::ExperimentConfig;
use crate::data::{load_prepared, PreparedData};
use crate::error::Result;
use crate::evaluate::{evaluate, mean_first_layer_kl, prior_histogram};
use crate::metrics::{EpochMetrics, MetricsLog};

const INIT_STREAM: u64 = 0x494e_4954;
const SHUFFLE_STREAM: u64 = 0x5348_4f46;

pub const METRICS_FILE: &str = "metrics.csv";
pub const FINAL_CHECKPOINT: &str = "final.blnz";
pub const BEST_CHECKPOINT: &str = "best.blnz";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Clone)]
pub struct TrainingOutcome<T> {
    pub log: MetricsLog,
    pub final_net: Network<T>,
    pub best_net: Network<T>,
    /// Epoch with the lowest test error (earliest on ties).
    pub best_epoch: usize,
}

/// One pass over `order` in mini-batches; returns the mean loss.
pub fn train_epoch<T: Scalar>(net: &mut Network<T>, data: &PreparedData<T>, order: &[usize], batch_size: usize, lr: f64) -> Result<f64> {
    let mut loss_sum = 0.0;
    for batch in order.chunks(batch_size) {
        let mut acc = Gradients::zeros_like(net);
        for &i in batch {
            let (x, y) = &data.train[i];
            let (loss, g, _) = loss_and_gradients(net, x, *y)?;
            loss_sum += loss.to_f64_lossy();
            acc.add_assign(&g);
        }
        acc.scale(T::from_f64_lossy(1.0 / batch.len() as f64));
        sgd_step(net, &acc, lr)?;
    }
    Ok(loss_sum / order.len() as f64)
}

/// Trains `cfg.preset` on prepared data. Nothing is written unless `out` is given;
/// `progress` sees every metrics row as soon as it exists.
pub fn train_prepared<T: Scalar>(
    cfg: &ExperimentConfig,
    data: &PreparedData<T>,
    out: Option<&Path>,
    progress: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainingOutcome<T>> {
    cfg.validate()?;
    let spec = cfg.preset.spec();
    let prior_hist = prior_histogram(&cfg.prior, &cfg.edges()?);
    let kl_inputs: Vec<_> = data.test.iter().take(cfg.kl_subsample.unwrap_or(usize::MAX)).map(|(x, _)| x).collect();
    let mut net = init_params::<T>(&spec, derive_seed(cfg.seed, INIT_STREAM, 0))?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_FILE), cfg.to_text())?;
    }

    let start = Instant::now();
    let mut log = MetricsLog::default();
    let mut best = (f64::INFINITY, 0usize, net.clone());
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 0..=cfg.epochs {
        let train_loss = if epoch == 0 {
            None
        } else {
            order.sort_unstable();
            order.shuffle(&mut seeded(derive_seed(cfg.seed, SHUFFLE_STREAM, epoch as u64)));
            Some(train_epoch(&mut net, data, &order, cfg.batch_size, cfg.learning_rate)?)
        };
        let eval_kl = epoch % cfg.kl_eval_every == 0 || epoch == cfg.epochs;
        let row = EpochMetrics {
            epoch,
            train_error: evaluate(&net, &data.train)?,
            test_error: evaluate(&net, &data.test)?,
            avg_kl_f1: if eval_kl {
                Some(mean_first_layer_kl(&net, kl_inputs.iter().copied(), &prior_hist)?)
            } else {
                None
            },
            train_loss,
            wall_clock_sec: start.elapsed().as_secs_f64(),
        };
        if row.test_error < best.0 {
            best = (row.test_error, epoch, net.clone());
        }
        progress(&row);
        log.rows.push(row);
        if let Some(dir) = out {
            fs::write(dir.join(METRICS_FILE), log.to_csv())?;
        }
    }
    if let Some(dir) = out {
        checkpoint::save(dir.join(FINAL_CHECKPOINT), &net)?;
        checkpoint::save(dir.join(BEST_CHECKPOINT), &best.2)?;
    }
    Ok(TrainingOutcome {
        log,
        final_net: net,
        best_net: best.2,
        best_epoch: best.1,
    })
}

/// Loads `cfg.data` and trains; writes metrics, config and checkpoints to `out`.
pub fn run_training<T: Scalar>(cfg: &ExperimentConfig, out: Option<&Path>, progress: &mut dyn FnMut(&EpochMetrics)) -> Result<TrainingOutcome<T>> {
    cfg.validate()?;
    let data = load_prepared::<T>(cfg, &cfg.preset.spec())?;
    train_prepared(cfg, &data, out, progress)
}
