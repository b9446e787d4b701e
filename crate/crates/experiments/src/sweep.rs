//! Width sweep: the same run for CNN1, CNN2 and CNN3.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use boltzlens_core::{checkpoint, Network, Preset, Scalar};
use boltzlens_synth::dataset::DatasetSplits;

use crate::config::ExperimentConfig;
use crate::data::prepare;
use crate::error::Result;
use crate::metrics::{EpochMetrics, MetricsLog};
use crate::train::train_prepared;

pub const KL_CURVES_FILE: &str = "sweep_kl.csv";
pub const ERROR_CURVES_FILE: &str = "sweep_error.csv";

pub fn checkpoint_file(p: Preset) -> String {
    format!("{}.blnz", p.name())
}

#[derive(Debug, Clone)]
pub struct SweepRun<T> {
    pub preset: Preset,
    pub log: MetricsLog,
    pub final_net: Network<T>,
}

impl<T> SweepRun<T> {
    pub fn final_kl(&self) -> Option<f64> {
        self.log.last().and_then(|r| r.avg_kl_f1)
    }

    pub fn final_test_error(&self) -> Option<f64> {
        self.log.last().map(|r| r.test_error)
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult<T> {
    pub runs: Vec<SweepRun<T>>,
}

impl<T> SweepResult<T> {
    pub fn run(&self, p: Preset) -> Option<&SweepRun<T>> {
        self.runs.iter().find(|r| r.preset == p)
    }

    /// `preset,epoch,avgKlF1`, one row per preset and trained epoch.
    pub fn kl_csv(&self) -> String {
        self.curves("avgKlF1", |r| r.avg_kl_f1.map_or(String::new(), |v| v.to_string()))
    }

    /// `preset,epoch,trainError,testError`, one row per preset and trained epoch.
    pub fn error_csv(&self) -> String {
        self.curves("trainError,testError", |r| format!("{},{}", r.train_error, r.test_error))
    }

    fn curves(&self, header: &str, cell: impl Fn(&EpochMetrics) -> String) -> String {
        let mut s = format!("preset,epoch,{header}\n");
        for run in &self.runs {
            for r in run.log.trained() {
                let _ = writeln!(s, "{},{},{}", run.preset, r.epoch, cell(r));
            }
        }
        s
    }
}

/// Trains every preset with `base`'s settings on the same data. With `out`,
/// writes the two curve CSVs and one final checkpoint per preset.
pub fn width_sweep<T: Scalar>(
    base: &ExperimentConfig,
    splits: &DatasetSplits,
    out: Option<&Path>,
    progress: &mut dyn FnMut(Preset, &EpochMetrics),
) -> Result<SweepResult<T>> {
    base.validate()?;
    let mut runs = Vec::with_capacity(Preset::ALL.len());
    for preset in Preset::ALL {
        let cfg = ExperimentConfig { preset, ..base.clone() };
        let data = prepare::<T>(splits, &cfg, &preset.spec())?;
        let outcome = train_prepared(&cfg, &data, None, &mut |r| progress(preset, r))?;
        runs.push(SweepRun {
            preset,
            log: outcome.log,
            final_net: outcome.final_net,
        });
    }
    let result = SweepResult { runs };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(KL_CURVES_FILE), result.kl_csv())?;
        fs::write(dir.join(ERROR_CURVES_FILE), result.error_csv())?;
        for run in &result.runs {
            checkpoint::save(dir.join(checkpoint_file(run.preset)), &run.final_net)?;
        }
    }
    Ok(result)
}
