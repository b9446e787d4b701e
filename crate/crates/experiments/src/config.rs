//! Run configuration, loadable from `key = value` text.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use boltzlens_core::problens::{BinEdges, PriorSpec};
use boltzlens_core::sgd::SgdConfig;
use boltzlens_core::Preset;

use crate::error::{ExperimentError, Result};

pub const REAL_LABEL_EPOCHS: usize = 30;
pub const RANDOM_LABEL_EPOCHS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    Real,
    Random,
}

impl FromStr for LabelMode {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "real" => Ok(LabelMode::Real),
            "random" => Ok(LabelMode::Random),
            other => Err(ExperimentError::Config(format!("labels must be `real` or `random`, got `{other}`"))),
        }
    }
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelMode::Real => "real",
            LabelMode::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub data: PathBuf,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub labels: LabelMode,
    /// Compute avgKlF1 every this many epochs (epoch 0 and the last epoch always).
    pub kl_eval_every: usize,
    /// Evaluate avgKlF1 on the first `n` test images only.
    pub kl_subsample: Option<usize>,
    /// Train on the first `n` training samples only.
    pub train_limit: Option<usize>,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub bins: usize,
    pub prior: PriorSpec,
}

impl ExperimentConfig {
    pub fn new(preset: Preset, data: impl Into<PathBuf>) -> Self {
        let sgd = SgdConfig::default();
        Self {
            preset,
            data: data.into(),
            epochs: REAL_LABEL_EPOCHS,
            batch_size: sgd.batch_size,
            learning_rate: sgd.learning_rate,
            seed: 0,
            labels: LabelMode::Real,
            kl_eval_every: 1,
            kl_subsample: None,
            train_limit: None,
            bin_lo: -128.0,
            bin_hi: 128.0,
            bins: 100,
            prior: PriorSpec::default(),
        }
    }

    pub fn edges(&self) -> Result<BinEdges> {
        Ok(BinEdges::uniform(self.bin_lo, self.bin_hi, self.bins)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.epochs < 1 {
            return bad(format!("epochs must be at least 1, got {}", self.epochs));
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.learning_rate));
        }
        if self.kl_eval_every < 1 {
            return bad("kl_eval_every must be at least 1".into());
        }
        if self.kl_subsample == Some(0) || self.train_limit == Some(0) {
            return bad("kl_subsample and train_limit must be positive when set".into());
        }
        self.edges()?;
        Ok(())
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| ExperimentError::Config(format!("`{key}`: cannot parse `{v}`")))
        }
        let opt = |v: &str| -> Result<Option<usize>> {
            if v.eq_ignore_ascii_case("none") || v.is_empty() {
                Ok(None)
            } else {
                num(key, v).map(Some)
            }
        };
        match key {
            "preset" => self.preset = value.parse().map_err(ExperimentError::Config)?,
            "data" => self.data = PathBuf::from(value),
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" | "batch" => self.batch_size = num(key, value)?,
            "lr" | "learning_rate" => self.learning_rate = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "labels" => self.labels = value.parse()?,
            "kl_eval_every" => self.kl_eval_every = num(key, value)?,
            "kl_subsample" => self.kl_subsample = opt(value)?,
            "train_limit" => self.train_limit = opt(value)?,
            "bin_lo" => self.bin_lo = num(key, value)?,
            "bin_hi" => self.bin_hi = num(key, value)?,
            "bins" => self.bins = num(key, value)?,
            "prior_mean" => self.prior.mean = num(key, value)?,
            "prior_variance" => self.prior = PriorSpec::new(self.prior.mean, num(key, value)?)?,
            other => return Err(ExperimentError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` (`#` starts a comment).
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ExperimentError::Config(format!("line {}: expected `key = value`", no + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let opt = |o: Option<usize>| o.map_or("none".to_string(), |v| v.to_string());
        format!(
            "preset = {}\ndata = {}\nepochs = {}\nbatch_size = {}\nlr = {}\nseed = {}\nlabels = {}\nkl_eval_every = {}\nkl_subsample = {}\ntrain_limit = {}\nbin_lo = {}\nbin_hi = {}\nbins = {}\nprior_mean = {}\nprior_variance = {}\n",
            self.preset,
            self.data.display(),
            self.epochs,
            self.batch_size,
            self.learning_rate,
            self.seed,
            self.labels,
            self.kl_eval_every,
            opt(self.kl_subsample),
            opt(self.train_limit),
            self.bin_lo,
            self.bin_hi,
            self.bins,
            self.prior.mean,
            self.prior.variance
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::new(Preset::Cnn2, "d.blds");
        assert_eq!((c.epochs, c.batch_size, c.learning_rate), (30, 32, 0.003));
        assert_eq!(c.edges().unwrap().bins(), 100);
        c.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::new(Preset::Cnn1, "a");
        c.apply_text("preset = cnn3 # widest\nepochs=200\nlabels = random\nkl_subsample = 50\n\nseed = 9").unwrap();
        assert_eq!((c.preset, c.epochs, c.labels, c.kl_subsample, c.seed), (Preset::Cnn3, 200, LabelMode::Random, Some(50), 9));
        let mut d = ExperimentConfig::new(Preset::Cnn1, "b");
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = ExperimentConfig::new(Preset::Cnn1, "a");
        assert!(c.apply_text("colour = blue").unwrap_err().to_string().contains("colour"));
        assert!(c.set("epochs", "-1").is_err());
        c.epochs = 0;
        assert!(c.validate().is_err());
        assert!(c.set("labels", "fake").is_err());
    }
}
