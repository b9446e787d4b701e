//! Synthetic Gaussian digit images.
//!
//! A source digit is binarised, brought to 32×32, and split into four
//! regions (outside, outside boundary, inside boundary, inside). 1024 draws
//! from `N(0, 1024)` are sorted in descending order and written into those
//! regions in that order, so every image is an exact permutation of an
//! i.i.d. Gaussian sample whose spatial arrangement still encodes the digit.

pub mod dataset;
pub mod error;
pub mod generator;
pub mod glyphs;
pub mod idx;
pub mod mask;
pub mod stats;

pub use dataset::{generate_dataset, load_dataset, randomize_labels, save_dataset, DatasetOptions, DatasetSplits, Manifest, Split, SyntheticDataset};
pub use error::{Result, SynthError};
pub use generator::{gaussian_draw, generate_sample, GeneratorOptions, SyntheticSample, IMAGE_SIDE, PIXELS, PRIOR_STD};
pub use idx::{load_idx, write_idx, SourceImage};
pub use stats::{ks_against_prior, ks_critical_value, ks_rejects};
pub use mask::{binarize, center_crop_downsample, decompose_mask, decompose_source, extract_edge, Mask, MaskDecomposition};
