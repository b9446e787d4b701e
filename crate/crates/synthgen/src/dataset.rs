//! Dataset assembly, label randomisation and the on-disk format.
//!
//! `dataset.blds` holds the training samples followed by the test samples:
//!
//! ```text
//! "BLDS"  u16 version  u32 count
//! per sample: u8 label, u64 seed, 1024 × f32 pixels (all little-endian)
//! ```
//!
//! A `key = value` sidecar manifest (`<file>.manifest`) records the split
//! sizes, per-class counts, the master seed and source checksums.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use boltzlens_core::rng::{derive_seed, seeded};
use boltzlens_core::Tensor;
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Result, SynthError};
use crate::generator::{generate_sample, GeneratorOptions, SyntheticSample, IMAGE_SIDE, PIXELS};
use crate::idx::SourceImage;

pub const BLDS_MAGIC: &[u8; 4] = b"BLDS";
pub const BLDS_VERSION: u16 = 1;
pub const NUM_CLASSES: u8 = 10;
const RECORD_BYTES: usize = 1 + 8 + 4 * PIXELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Test => 2,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub samples: Vec<SyntheticSample>,
    pub split: Split,
    pub class_counts: BTreeMap<u8, usize>,
}

impl SyntheticDataset {
    pub fn new(samples: Vec<SyntheticSample>, split: Split) -> Self {
        let class_counts = count_classes(samples.iter().map(|s| s.label));
        Self {
            samples,
            split,
            class_counts,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// First `n` samples (or all, if fewer).
    pub fn truncated(&self, n: usize) -> Self {
        Self::new(self.samples[..n.min(self.len())].to_vec(), self.split)
    }
}

fn count_classes(labels: impl Iterator<Item = u8>) -> BTreeMap<u8, usize> {
    let mut m = BTreeMap::new();
    for l in labels {
        *m.entry(l).or_insert(0) += 1;
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub train: SyntheticDataset,
    pub test: SyntheticDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetOptions {
    pub per_class_train: usize,
    pub per_class_test: usize,
    pub master_seed: u64,
    pub generator: GeneratorOptions,
    /// Let one source image seed several samples when a class is short.
    pub allow_source_reuse: bool,
}

impl DatasetOptions {
    /// 1,000 train + 1,000 test images per class.
    pub fn paper_scale(master_seed: u64) -> Self {
        Self::with_counts(1000, 1000, master_seed)
    }

    /// 100 + 100 per class.
    pub fn desk_scale(master_seed: u64) -> Self {
        Self::with_counts(100, 100, master_seed)
    }

    pub fn with_counts(per_class_train: usize, per_class_test: usize, master_seed: u64) -> Self {
        Self {
            per_class_train,
            per_class_test,
            master_seed,
            generator: GeneratorOptions::default(),
            allow_source_reuse: true,
        }
    }
}

/// Sources assigned to one class's train and test samples.
///
/// With enough images the two splits draw on disjoint sources in corpus
/// order; otherwise each split cycles through its own share (or, with a
/// single image, both share it). Every sample still has its own seed.
fn allocate<'a>(pool: &[&'a SourceImage], n_train: usize, n_test: usize) -> (Vec<&'a SourceImage>, Vec<&'a SourceImage>) {
    let need = n_train + n_test;
    let (train_pool, test_pool) = if pool.len() >= need {
        (&pool[..n_train], &pool[n_train..need])
    } else if pool.len() >= 2 && n_train > 0 && n_test > 0 {
        let k = ((pool.len() * n_train) / need).clamp(1, pool.len() - 1);
        (&pool[..k], &pool[k..])
    } else {
        (pool, pool)
    };
    let cycle = |p: &[&'a SourceImage], n: usize| (0..n).map(|i| p[i % p.len()]).collect::<Vec<_>>();
    (cycle(train_pool, n_train), cycle(test_pool, n_test))
}

/// Deterministic in `(sources, opts)`. Samples are ordered index-major,
/// class-minor (0, 1, …, 9, 0, 1, …); sample `i` of a split gets seed
/// `derive_seed(master, split, i)`.
pub fn generate_dataset(sources: &[SourceImage], opts: &DatasetOptions) -> Result<DatasetSplits> {
    let need = opts.per_class_train + opts.per_class_test;
    let mut per_class: Vec<(Vec<&SourceImage>, Vec<&SourceImage>)> = Vec::with_capacity(NUM_CLASSES as usize);
    for class in 0..NUM_CLASSES {
        let pool: Vec<&SourceImage> = sources.iter().filter(|s| s.label == class).collect();
        let short = if opts.allow_source_reuse { pool.is_empty() && need > 0 } else { pool.len() < need };
        if short {
            return Err(SynthError::InsufficientSources {
                class,
                available: pool.len(),
                needed: if opts.allow_source_reuse { 1 } else { need },
            });
        }
        per_class.push(allocate(&pool, opts.per_class_train, opts.per_class_test));
    }
    let build = |split: Split, per: usize| -> Result<SyntheticDataset> {
        let mut samples = Vec::with_capacity(per * NUM_CLASSES as usize);
        for i in 0..per {
            for (train, test) in &per_class {
                let src = match split {
                    Split::Train => train[i],
                    Split::Test => test[i],
                };
                let seed = derive_seed(opts.master_seed, split.stream(), samples.len() as u64);
                samples.push(generate_sample(src, seed, &opts.generator)?);
            }
        }
        Ok(SyntheticDataset::new(samples, split))
    };
    Ok(DatasetSplits {
        train: build(Split::Train, opts.per_class_train)?,
        test: build(Split::Test, opts.per_class_test)?,
    })
}

const LABEL_STREAM: u64 = 0x4c41_4245;

/// Replaces every label with a uniform draw over 0–9. Pixels are untouched;
/// train and test use independent streams.
pub fn randomize_labels(ds: &SyntheticDataset, seed: u64) -> SyntheticDataset {
    let mut rng = seeded(derive_seed(seed, LABEL_STREAM, ds.split.stream()));
    let samples = ds
        .samples
        .iter()
        .map(|s| SyntheticSample {
            label: rng.gen_range(0..NUM_CLASSES),
            ..s.clone()
        })
        .collect();
    SyntheticDataset::new(samples, ds.split)
}

pub fn encode_blds<'a>(samples: impl ExactSizeIterator<Item = &'a SyntheticSample>) -> Result<Vec<u8>> {
    let n = samples.len();
    let count = u32::try_from(n).map_err(|_| SynthError::Invalid(format!("{n} samples exceed the format limit")))?;
    let mut out = Vec::with_capacity(10 + n * RECORD_BYTES);
    out.extend_from_slice(BLDS_MAGIC);
    out.extend_from_slice(&BLDS_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for s in samples {
        out.push(s.label);
        out.extend_from_slice(&s.seed.to_le_bytes());
        for &v in s.pixels.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_blds(bytes: &[u8], origin: &str) -> Result<Vec<SyntheticSample>> {
    if bytes.len() < 10 || &bytes[..4] != BLDS_MAGIC {
        return Err(SynthError::Format(format!("{origin}: not a BLDS file")));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != BLDS_VERSION {
        return Err(SynthError::Format(format!("{origin}: unsupported version {version}")));
    }
    let n = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let body = &bytes[10..];
    if body.len() != n * RECORD_BYTES {
        return Err(SynthError::Format(format!(
            "{origin}: expected {} payload bytes for {n} samples, found {}",
            n * RECORD_BYTES,
            body.len()
        )));
    }
    body.chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[0];
            if label >= NUM_CLASSES {
                return Err(SynthError::Format(format!("{origin}: sample {i} has label {label}")));
            }
            let seed = u64::from_le_bytes(rec[1..9].try_into().unwrap());
            let pixels = rec[9..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
            Ok(SyntheticSample {
                pixels: Tensor::new(vec![IMAGE_SIDE, IMAGE_SIDE], pixels)?,
                label,
                seed,
                source_id: format!("{origin}#{i}"),
            })
        })
        .collect()
}

/// Sidecar metadata, stored as sorted `key = value` lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)
            .ok_or_else(|| SynthError::Format(format!("manifest lacks `{key}`")))?
            .parse()
            .map_err(|_| SynthError::Format(format!("manifest `{key}` is malformed")))
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SynthError::Format(format!("manifest line {}: expected `key = value`", no + 1)))?;
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }
}

fn render_counts(c: &BTreeMap<u8, usize>) -> String {
    c.iter().map(|(k, v)| format!("{k}:{v}")).collect::<Vec<_>>().join(",")
}

pub fn manifest_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Manifest describing `splits` as produced under `opts`.
pub fn describe(splits: &DatasetSplits, opts: &DatasetOptions) -> Manifest {
    let mut m = Manifest::default();
    m.set("format", "BLDS");
    m.set("version", BLDS_VERSION);
    m.set("master_seed", opts.master_seed);
    m.set("per_class_train", opts.per_class_train);
    m.set("per_class_test", opts.per_class_test);
    m.set("threshold", opts.generator.threshold);
    m.set("shuffle_within_region", opts.generator.shuffle_within_region);
    m.set("flip_polarity", opts.generator.flip_polarity);
    m.set("train_count", splits.train.len());
    m.set("test_count", splits.test.len());
    m.set("train_class_counts", render_counts(&splits.train.class_counts));
    m.set("test_class_counts", render_counts(&splits.test.class_counts));
    m
}

/// Writes the dataset file and its manifest.
pub fn save_dataset(path: impl AsRef<Path>, splits: &DatasetSplits, manifest: &Manifest) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_blds(splits.train.samples.iter().chain(&splits.test.samples).collect::<Vec<_>>().into_iter())?;
    let mut manifest = manifest.clone();
    manifest.set("dataset_sha256", sha256_hex(&bytes));
    fs::write(path, bytes)?;
    fs::write(manifest_path(path), manifest.render())?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<(DatasetSplits, Manifest)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(SynthError::file(path))?;
    let mpath = manifest_path(path);
    let manifest = Manifest::parse(&fs::read_to_string(&mpath).map_err(SynthError::file(&mpath))?)?;
    let origin = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut samples = decode_blds(&bytes, &origin)?;
    let n_train: usize = manifest.require("train_count")?;
    let n_test: usize = manifest.require("test_count")?;
    if n_train + n_test != samples.len() {
        return Err(SynthError::Format(format!(
            "manifest declares {n_train} + {n_test} samples, file holds {}",
            samples.len()
        )));
    }
    let test = samples.split_off(n_train);
    let splits = DatasetSplits {
        train: SyntheticDataset::new(samples, Split::Train),
        test: SyntheticDataset::new(test, Split::Test),
    };
    for (key, ds) in [("train_class_counts", &splits.train), ("test_class_counts", &splits.test)] {
        if let Some(declared) = manifest.get(key) {
            if declared != render_counts(&ds.class_counts) {
                return Err(SynthError::Format(format!("{key} in manifest does not match the file")));
            }
        }
    }
    Ok((splits, manifest))
}
