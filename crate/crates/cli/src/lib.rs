//! `boltzlens` command line: argument parsing and dispatch.
//!
//! Exit codes: 0 success, 1 usage or domain error, 2 file I/O error.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use boltzlens_core::problens::BinEdges;
use boltzlens_core::{Preset, Scalar};
use boltzlens_experiments::config::RANDOM_LABEL_EPOCHS;
use boltzlens_experiments::report::report_from_checkpoint;
use boltzlens_experiments::{run_training, run_verify, width_sweep, write_report, EpochMetrics, ExperimentConfig, ExperimentError, LabelMode};
use boltzlens_synth::dataset::{describe, sha256_file};
use boltzlens_synth::glyphs::render_corpus;
use boltzlens_synth::mask::DEFAULT_THRESHOLD;
use boltzlens_synth::{generate_dataset, load_dataset, load_idx, save_dataset, write_idx, DatasetOptions, GeneratorOptions, SynthError};
use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: u8 = 0;
pub const EXIT_DOMAIN: u8 = 1;
pub const EXIT_IO: u8 = 2;

pub const PRECISION_ENV: &str = "BOLTZLENS_PRECISION";
pub const DATASET_FILE: &str = "dataset.blds";
pub const SOURCE_IMAGES_FILE: &str = "sources-images-idx3-ubyte";
pub const SOURCE_LABELS_FILE: &str = "sources-labels-idx1-ubyte";

#[derive(Debug, Parser)]
#[command(name = "boltzlens", version, about = "CNN layers as Boltzmann distributions: synthetic data, training and layer reports")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a procedural digit corpus as an IDX image/label pair.
    MakeSources(MakeSourcesArgs),
    /// Generate the Gaussian synthetic dataset from an IDX digit corpus.
    SynthGen(SynthGenArgs),
    /// Train one network and log per-epoch metrics.
    Train(TrainArgs),
    /// Per-layer distribution report for one test image.
    Report(ReportArgs),
    /// Train CNN1, CNN2 and CNN3 under identical settings.
    Sweep(SweepArgs),
    /// Train on uniformly random labels.
    RandomLabel(RandomLabelArgs),
    /// Run the fast invariant checks.
    Verify,
}

#[derive(Debug, Args)]
pub struct MakeSourcesArgs {
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub per_class: u64,
    #[arg(long, value_name = "S")]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthGenArgs {
    /// IDX image file followed by its label file.
    #[arg(long, num_args = 2, value_names = ["IMAGES", "LABELS"])]
    pub source: Vec<PathBuf>,
    #[arg(long, value_name = "N")]
    pub per_class_train: usize,
    #[arg(long, value_name = "N")]
    pub per_class_test: usize,
    #[arg(long, value_name = "S")]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, value_name = "T", default_value_t = DEFAULT_THRESHOLD, value_parser = clap::value_parser!(u8).range(1..255))]
    pub threshold: u8,
    /// Shuffle values within each region instead of raster placement.
    #[arg(long)]
    pub shuffle_within_region: bool,
    /// Give the digit strokes the largest values instead of the smallest.
    #[arg(long)]
    pub flip_polarity: bool,
    /// Fail instead of reusing source images when a class is short.
    #[arg(long)]
    pub no_source_reuse: bool,
}

/// Options shared by every training command.
#[derive(Debug, Args)]
pub struct RunOptions {
    #[arg(long, value_name = "F")]
    pub lr: Option<f64>,
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: Option<u64>,
    /// Evaluate avgKlF1 every N epochs.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub kl_every: Option<u64>,
    /// Evaluate avgKlF1 on the first N test images only.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub kl_subsample: Option<u64>,
    /// Train on the first N training samples only.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub train_limit: Option<u64>,
    /// `key = value` config file; flags given on the command line win.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "PRESET", required_unless_present = "config")]
    pub preset: Option<Preset>,
    #[arg(long, value_name = "FILE", required_unless_present = "config")]
    pub data: Option<PathBuf>,
    #[arg(long, value_name = "N", allow_negative_numbers = true, value_parser = clap::value_parser!(i64).range(1..), required_unless_present = "config")]
    pub epochs: Option<i64>,
    #[arg(long, value_name = "S", required_unless_present = "config")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "MODE", value_parser = ["real", "random"])]
    pub labels: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunOptions,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Index into the test split.
    #[arg(long, value_name = "N")]
    pub index: usize,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[arg(long, value_name = "N", allow_negative_numbers = true, value_parser = clap::value_parser!(i64).range(1..))]
    pub epochs: i64,
    #[arg(long, value_name = "S")]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunOptions,
}

#[derive(Debug, Args)]
pub struct RandomLabelArgs {
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[arg(long, value_name = "N", allow_negative_numbers = true, default_value_t = RANDOM_LABEL_EPOCHS as i64, value_parser = clap::value_parser!(i64).range(1..))]
    pub epochs: i64,
    #[arg(long, value_name = "S")]
    pub seed: u64,
    #[arg(long, value_name = "PRESET", default_value = "cnn3")]
    pub preset: Preset,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunOptions,
}

/// Parses a full argument vector (program name first).
pub fn parse_args<I, T>(argv: I) -> Result<Command, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(argv).map(|c| c.command)
}

/// Prints a parse failure; help and version requests exit 0.
pub fn report_usage(e: &clap::Error) -> u8 {
    let _ = e.print();
    if e.use_stderr() {
        EXIT_DOMAIN
    } else {
        EXIT_OK
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

/// Reads `BOLTZLENS_PRECISION`; unset means f64.
pub fn precision_from_env() -> Result<Precision, CliError> {
    match std::env::var(PRECISION_ENV) {
        Err(_) => Ok(Precision::F64),
        Ok(v) => match v.trim().to_ascii_lowercase().as_str() {
            "f64" | "" => Ok(Precision::F64),
            "f32" => Ok(Precision::F32),
            other => Err(CliError::Domain(format!("{PRECISION_ENV} must be f32 or f64, got `{other}`"))),
        },
    }
}

#[derive(Debug)]
pub enum CliError {
    Domain(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Domain(_) => EXIT_DOMAIN,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Domain(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Domain(e.to_string())
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        ExperimentError::from(e).into()
    }
}

impl From<boltzlens_core::CoreError> for CliError {
    fn from(e: boltzlens_core::CoreError) -> Self {
        ExperimentError::from(e).into()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

/// Runs a parsed command and returns its exit code.
pub fn dispatch(cmd: Command) -> u8 {
    let result = match cmd {
        Command::MakeSources(a) => make_sources(&a),
        Command::SynthGen(a) => synth_gen(&a),
        Command::Train(a) => train(&a),
        Command::Report(a) => report(&a),
        Command::Sweep(a) => sweep(&a),
        Command::RandomLabel(a) => random_label(&a),
        Command::Verify => verify(),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn make_sources(a: &MakeSourcesArgs) -> CliResult {
    fs::create_dir_all(&a.out)?;
    let corpus = render_corpus(a.per_class as usize, a.seed);
    write_idx(a.out.join(SOURCE_IMAGES_FILE), a.out.join(SOURCE_LABELS_FILE), &corpus)?;
    println!(
        "wrote {} digits to {} and {}",
        corpus.len(),
        a.out.join(SOURCE_IMAGES_FILE).display(),
        a.out.join(SOURCE_LABELS_FILE).display()
    );
    Ok(())
}

fn synth_gen(a: &SynthGenArgs) -> CliResult {
    let (images, labels) = (&a.source[0], &a.source[1]);
    let sources = load_idx(images, labels)?;
    let opts = DatasetOptions {
        per_class_train: a.per_class_train,
        per_class_test: a.per_class_test,
        master_seed: a.seed,
        generator: GeneratorOptions {
            threshold: a.threshold,
            shuffle_within_region: a.shuffle_within_region,
            flip_polarity: a.flip_polarity,
        },
        allow_source_reuse: !a.no_source_reuse,
    };
    let splits = generate_dataset(&sources, &opts)?;
    let mut manifest = describe(&splits, &opts);
    manifest.set("source_images_sha256", sha256_file(images)?);
    manifest.set("source_labels_sha256", sha256_file(labels)?);
    manifest.set("source_count", sources.len());
    fs::create_dir_all(&a.out)?;
    let path = a.out.join(DATASET_FILE);
    save_dataset(&path, &splits, &manifest)?;
    println!("wrote {} train + {} test samples to {}", splits.train.len(), splits.test.len(), path.display());
    Ok(())
}

fn base_config(preset: Preset, data: &Path, run: &RunOptions) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::new(preset, data);
    if let Some(path) = &run.config {
        cfg.apply_text(&fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?)?;
    }
    apply_run_options(&mut cfg, run);
    Ok(cfg)
}

fn apply_run_options(cfg: &mut ExperimentConfig, run: &RunOptions) {
    if let Some(v) = run.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = run.batch {
        cfg.batch_size = v as usize;
    }
    if let Some(v) = run.kl_every {
        cfg.kl_eval_every = v as usize;
    }
    if let Some(v) = run.kl_subsample {
        cfg.kl_subsample = Some(v as usize);
    }
    if let Some(v) = run.train_limit {
        cfg.train_limit = Some(v as usize);
    }
}

fn log_epoch(tag: &str) -> impl FnMut(&EpochMetrics) + '_ {
    move |r: &EpochMetrics| {
        let kl = r.avg_kl_f1.map_or("-".to_string(), |v| format!("{v:.4}"));
        eprintln!(
            "[{tag}] epoch {:>3}  train {:.4}  test {:.4}  avgKlF1 {kl}  {:.1}s",
            r.epoch, r.train_error, r.test_error, r.wall_clock_sec
        );
    }
}

fn run_and_summarise(cfg: &ExperimentConfig, out: &Path) -> CliResult {
    cfg.validate()?;
    let precision = precision_from_env()?;
    let tag = format!("{} {}", cfg.preset, precision);
    let mut progress = log_epoch(&tag);
    let last = match precision {
        Precision::F64 => run_training::<f64>(cfg, Some(out), &mut progress)?.log,
        Precision::F32 => run_training::<f32>(cfg, Some(out), &mut progress)?.log,
    };
    if let Some(r) = last.last() {
        println!(
            "{} ({} labels): final train error {:.4}, test error {:.4}, avgKlF1 {}",
            cfg.preset,
            cfg.labels,
            r.train_error,
            r.test_error,
            r.avg_kl_f1.map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    Ok(())
}

fn train(a: &TrainArgs) -> CliResult {
    let mut cfg = ExperimentConfig::new(Preset::Cnn1, "");
    if let Some(path) = &a.run.config {
        cfg.apply_text(&fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?)?;
    }
    if let Some(p) = a.preset {
        cfg.preset = p;
    }
    if let Some(d) = &a.data {
        cfg.data = d.clone();
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e as usize;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(l) = &a.labels {
        cfg.labels = l.parse()?;
    }
    apply_run_options(&mut cfg, &a.run);
    if cfg.data.as_os_str().is_empty() {
        return Err(CliError::Domain("no dataset given: pass --data or set `data` in the config file".into()));
    }
    run_and_summarise(&cfg, &a.out)
}

fn random_label(a: &RandomLabelArgs) -> CliResult {
    let mut cfg = base_config(a.preset, &a.data, &a.run)?;
    cfg.preset = a.preset;
    cfg.data = a.data.clone();
    cfg.epochs = a.epochs as usize;
    cfg.seed = a.seed;
    cfg.labels = LabelMode::Random;
    run_and_summarise(&cfg, &a.out)
}

fn sweep(a: &SweepArgs) -> CliResult {
    let mut cfg = base_config(Preset::Cnn1, &a.data, &a.run)?;
    cfg.data = a.data.clone();
    cfg.epochs = a.epochs as usize;
    cfg.seed = a.seed;
    cfg.validate()?;
    let (splits, _) = load_dataset(&cfg.data)?;
    let precision = precision_from_env()?;
    let mut progress = |p: Preset, r: &EpochMetrics| log_epoch(&format!("{p} {precision}"))(r);
    let finals: Vec<(Preset, Option<f64>, Option<f64>)> = match precision {
        Precision::F64 => summarise(width_sweep::<f64>(&cfg, &splits, Some(&a.out), &mut progress)?),
        Precision::F32 => summarise(width_sweep::<f32>(&cfg, &splits, Some(&a.out), &mut progress)?),
    };
    println!("preset  avgKlF1  testError");
    for (p, kl, err) in finals {
        let f = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.4}"));
        println!("{p:<6}  {:<7}  {}", f(kl), f(err));
    }
    Ok(())
}

fn summarise<T: Scalar>(r: boltzlens_experiments::SweepResult<T>) -> Vec<(Preset, Option<f64>, Option<f64>)> {
    r.runs.iter().map(|run| (run.preset, run.final_kl(), run.final_test_error())).collect()
}

fn report(a: &ReportArgs) -> CliResult {
    let cfg = ExperimentConfig::new(Preset::Cnn1, &a.data);
    let (splits, _) = load_dataset(&a.data)?;
    let edges: BinEdges = cfg.edges()?;
    let rep = report_from_checkpoint(&a.checkpoint, &splits, a.index, &cfg.prior, &edges)?;
    write_report(&a.out, &rep)?;
    for p in &rep.panels {
        if let Some(kl) = p.kl {
            println!("KL[P(X) || P({})] = {kl:.4}", p.name);
        }
    }
    let probs = &rep.output_probs;
    let pred = (0..probs.len()).fold(0, |b, i| if probs[i] > probs[b] { i } else { b });
    println!("predicted class {pred} (p = {:.4}); label {}", probs[pred], splits.test.samples[a.index].label);
    Ok(())
}

fn verify() -> CliResult {
    let checks = run_verify();
    for c in &checks {
        println!("{} {:<11} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if checks.iter().all(|c| c.passed) {
        Ok(())
    } else {
        Err(CliError::Domain("verification failed".into()))
    }
}
