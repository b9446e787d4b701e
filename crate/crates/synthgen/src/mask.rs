//! Binary masks and the four-region decomposition of a 32×32 digit mask.

use crate::error::{Result, SynthError};
use crate::generator::IMAGE_SIDE;
use crate::idx::SourceImage;

pub const DEFAULT_THRESHOLD: u8 = 127;
const MIN_SOURCE_SIDE: usize = 28;
const CROP_SIDE: usize = 2 * IMAGE_SIDE;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                bits.push(f(r, c));
            }
        }
        Self { rows, cols, bits }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.cols + c] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    fn zip(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Mask {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mask {
            rows: self.rows,
            cols: self.cols,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn and_not(&self, other: &Mask) -> Mask {
        self.zip(other, |a, b| a && !b)
    }

    pub fn or(&self, other: &Mask) -> Mask {
        self.zip(other, |a, b| a || b)
    }

    pub fn not(&self) -> Mask {
        Mask {
            rows: self.rows,
            cols: self.cols,
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }

    fn cross(&self, r: usize, c: usize) -> impl Iterator<Item = Option<bool>> + '_ {
        let at = move |dr: isize, dc: isize| {
            let (rr, cc) = (r as isize + dr, c as isize + dc);
            (rr >= 0 && cc >= 0 && (rr as usize) < self.rows && (cc as usize) < self.cols).then(|| self.get(rr as usize, cc as usize))
        };
        [(-1, 0), (1, 0), (0, -1), (0, 1)].into_iter().map(move |(dr, dc)| at(dr, dc))
    }

    /// Erosion by the 3×3 cross; pixels beyond the border count as background.
    pub fn erode(&self) -> Mask {
        Mask::from_fn(self.rows, self.cols, |r, c| self.get(r, c) && self.cross(r, c).all(|v| v == Some(true)))
    }

    /// Dilation by the 3×3 cross.
    pub fn dilate(&self) -> Mask {
        Mask::from_fn(self.rows, self.cols, |r, c| self.get(r, c) || self.cross(r, c).any(|v| v == Some(true)))
    }

    /// Dilation by the full 3×3 square (8-neighbourhood).
    pub fn dilate_square(&self) -> Mask {
        Mask::from_fn(self.rows, self.cols, |r, c| {
            (r.saturating_sub(1)..(r + 2).min(self.rows)).any(|rr| (c.saturating_sub(1)..(c + 2).min(self.cols)).any(|cc| self.get(rr, cc)))
        })
    }
}

pub fn binarize(img: &SourceImage, threshold: u8) -> Mask {
    Mask {
        rows: img.rows,
        cols: img.cols,
        bits: img.pixels.iter().map(|&p| p > threshold).collect(),
    }
}

/// Brings a mask to 32×32.
///
/// Masks at least 64 on both sides take their central 64×64 window and
/// downsample it by 2×2 majority (two of four is enough, so one-pixel strokes
/// survive). Smaller masks are centred in a 32×32 field: zero-padded along
/// axes shorter than 32, centre-cropped along longer ones.
pub fn center_crop_downsample(mask: &Mask) -> Result<Mask> {
    let (h, w) = (mask.rows, mask.cols);
    if h < MIN_SOURCE_SIDE || w < MIN_SOURCE_SIDE {
        return Err(SynthError::TooSmall { rows: h, cols: w });
    }
    if h >= CROP_SIDE && w >= CROP_SIDE {
        let (r0, c0) = ((h - CROP_SIDE) / 2, (w - CROP_SIDE) / 2);
        return Ok(Mask::from_fn(IMAGE_SIDE, IMAGE_SIDE, |r, c| {
            let votes = [(0, 0), (0, 1), (1, 0), (1, 1)]
                .iter()
                .filter(|(dr, dc)| mask.get(r0 + 2 * r + dr, c0 + 2 * c + dc))
                .count();
            votes >= 2
        }));
    }
    // offset maps output coordinate to source: src = out + off
    let off = |n: usize| n as isize / 2 - IMAGE_SIDE as isize / 2;
    let (ro, co) = (off(h), off(w));
    Ok(Mask::from_fn(IMAGE_SIDE, IMAGE_SIDE, |r, c| {
        let (sr, sc) = (r as isize + ro, c as isize + co);
        sr >= 0 && sc >= 0 && (sr as usize) < h && (sc as usize) < w && mask.get(sr as usize, sc as usize)
    }))
}

/// Foreground pixels with at least one 4-neighbour in the background.
pub fn extract_edge(mask: &Mask) -> Mask {
    mask.and_not(&mask.erode())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskDecomposition {
    pub outside: Mask,
    pub outside_boundary: Mask,
    pub inside_boundary: Mask,
    pub inside: Mask,
}

impl MaskDecomposition {
    /// Regions in value-assignment order.
    pub fn regions(&self) -> [&Mask; 4] {
        [&self.outside, &self.outside_boundary, &self.inside_boundary, &self.inside]
    }

    pub fn sizes(&self) -> [usize; 4] {
        self.regions().map(Mask::count)
    }

    /// Pairwise disjoint and jointly exhaustive.
    pub fn is_partition(&self) -> bool {
        let n = self.outside.bits.len();
        let regions = self.regions();
        if regions.iter().any(|m| m.bits.len() != n) {
            return false;
        }
        (0..n).all(|p| regions.iter().filter(|m| m.bits[p]).count() == 1)
    }

    /// Region index (assignment order) of every pixel, row-major.
    pub fn labels(&self) -> Vec<u8> {
        let regions = self.regions();
        (0..self.outside.bits.len())
            .map(|p| regions.iter().position(|m| m.bits[p]).unwrap_or(0) as u8)
            .collect()
    }
}

pub fn decompose_mask(mask: &Mask, edge: &Mask) -> MaskDecomposition {
    let inside_boundary = edge.clone();
    let inside = mask.and_not(edge);
    // The 8-neighbourhood closes the band at corners, so it fully
    // separates the digit from the outside region.
    let outside_boundary = mask.dilate_square().and_not(mask);
    let outside = inside_boundary.or(&inside).or(&outside_boundary).not();
    MaskDecomposition {
        outside,
        outside_boundary,
        inside_boundary,
        inside,
    }
}

/// Full pipeline from a source digit to its 32×32 decomposition.
pub fn decompose_source(src: &SourceImage, threshold: u8) -> Result<MaskDecomposition> {
    let mask = center_crop_downsample(&binarize(src, threshold))?;
    let edge = extract_edge(&mask);
    Ok(decompose_mask(&mask, &edge))
}
