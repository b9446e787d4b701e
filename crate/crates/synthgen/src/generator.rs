//! Mask-driven placement of a sorted Gaussian draw.

use boltzlens_core::rng::{derive_seed, seeded, BoxMuller};
use boltzlens_core::{Scalar, Tensor};
use rand::seq::SliceRandom;

use crate::error::Result;
use crate::idx::SourceImage;
use crate::mask::{decompose_source, MaskDecomposition, DEFAULT_THRESHOLD};

pub const IMAGE_SIDE: usize = 32;
pub const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
/// Standard deviation of the pixel prior, `N(0, 32²)`.
pub const PRIOR_STD: f64 = 32.0;

const SHUFFLE_STREAM: u64 = 0x5348_5546;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorOptions {
    pub threshold: u8,
    /// Seeded shuffle of the values inside each region instead of raster order.
    pub shuffle_within_region: bool,
    /// Assign the draw in ascending order, so strokes get the largest values.
    pub flip_polarity: bool,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            shuffle_within_region: false,
            flip_polarity: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    /// `[32, 32]`, row-major.
    pub pixels: Tensor<f64>,
    pub label: u8,
    pub seed: u64,
    pub source_id: String,
}

impl SyntheticSample {
    /// Network input of shape `[32, 32, 1]`.
    pub fn input<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_fn(&[IMAGE_SIDE, IMAGE_SIDE, 1], |i| T::from_f64_lossy(self.pixels.data()[i]))
    }
}

/// The 1024 raw `N(0, 1024)` values behind a sample seed, in draw order.
///
/// Values are rounded to `f32` so the on-disk format stores them exactly.
pub fn gaussian_draw(seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    BoxMuller::new(0.0, PRIOR_STD)
        .sample_n(&mut rng, PIXELS)
        .into_iter()
        .map(|v| v as f32 as f64)
        .collect()
}

/// Writes a descending-sorted draw into the four regions in order
/// outside, outside boundary, inside boundary, inside.
pub fn place(decomp: &MaskDecomposition, draw: &[f64], seed: u64, opts: &GeneratorOptions) -> Vec<f64> {
    debug_assert_eq!(draw.len(), PIXELS);
    let mut sorted = draw.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if opts.flip_polarity {
        sorted.reverse();
    }
    let mut shuffler = opts.shuffle_within_region.then(|| seeded(derive_seed(seed, SHUFFLE_STREAM, 0)));
    let mut pixels = vec![0.0; PIXELS];
    let mut start = 0;
    for region in decomp.regions() {
        let n = region.count();
        let mut segment = sorted[start..start + n].to_vec();
        start += n;
        if let Some(rng) = shuffler.as_mut() {
            segment.shuffle(rng);
        }
        let positions = region.bits().iter().enumerate().filter(|(_, &b)| b).map(|(p, _)| p);
        for (p, v) in positions.zip(segment) {
            pixels[p] = v;
        }
    }
    pixels
}

pub fn generate_sample(src: &SourceImage, seed: u64, opts: &GeneratorOptions) -> Result<SyntheticSample> {
    let decomp = decompose_source(src, opts.threshold)?;
    let pixels = place(&decomp, &gaussian_draw(seed), seed, opts);
    Ok(SyntheticSample {
        pixels: Tensor::new(vec![IMAGE_SIDE, IMAGE_SIDE], pixels)?,
        label: src.label,
        seed,
        source_id: src.id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glyphs::render_digit;

    fn sorted(v: &[f64]) -> Vec<f64> {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn pixels_are_a_permutation_of_the_draw() {
        let src = render_digit(3, 11);
        for seed in 0..20 {
            for opts in [
                GeneratorOptions::default(),
                GeneratorOptions {
                    shuffle_within_region: true,
                    ..Default::default()
                },
                GeneratorOptions {
                    flip_polarity: true,
                    ..Default::default()
                },
            ] {
                let s = generate_sample(&src, seed, &opts).unwrap();
                assert_eq!(sorted(s.pixels.data()), sorted(&gaussian_draw(seed)));
            }
        }
    }

    #[test]
    fn regions_are_ordered_by_value() {
        let src = render_digit(8, 2);
        let d = decompose_source(&src, DEFAULT_THRESHOLD).unwrap();
        let s = generate_sample(&src, 99, &GeneratorOptions::default()).unwrap();
        let px = s.pixels.data();
        let vals = |m: &crate::mask::Mask| -> Vec<f64> { m.bits().iter().zip(px).filter(|(&b, _)| b).map(|(_, &v)| v).collect() };
        let regs: Vec<Vec<f64>> = d.regions().iter().map(|m| vals(m)).collect();
        for w in regs.windows(2) {
            if let (Some(lo), Some(hi)) = (w[0].iter().cloned().reduce(f64::min), w[1].iter().cloned().reduce(f64::max)) {
                assert!(lo >= hi);
            }
        }
        assert!(d.sizes().iter().all(|&n| n > 0));
    }

    #[test]
    fn raster_placement_descends_within_region() {
        let src = render_digit(1, 0);
        let d = decompose_source(&src, DEFAULT_THRESHOLD).unwrap();
        let s = generate_sample(&src, 5, &GeneratorOptions::default()).unwrap();
        let outside: Vec<f64> = d.outside.bits().iter().zip(s.pixels.data()).filter(|(&b, _)| b).map(|(_, &v)| v).collect();
        assert!(outside.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn moments_within_bounds_for_most_seeds() {
        let src = render_digit(0, 0);
        let mut ok = 0;
        for seed in 0..1000u64 {
            let s = generate_sample(&src, seed, &GeneratorOptions::default()).unwrap();
            let px = s.pixels.data();
            let mean = px.iter().sum::<f64>() / PIXELS as f64;
            let var = px.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (PIXELS - 1) as f64;
            // mean s.e. = 1, std s.e. ≈ 0.71: the bands are ≥ 2.8 s.e. wide.
            if mean.abs() <= 4.0 && (30.0..=34.0).contains(&var.sqrt()) {
                ok += 1;
            }
        }
        assert!(ok >= 990, "{ok}");
    }

    #[test]
    fn values_survive_f32_storage() {
        assert!(gaussian_draw(3).iter().all(|&v| v as f32 as f64 == v));
    }
}
