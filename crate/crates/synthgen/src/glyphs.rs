//! Procedural handwritten-style digits.
//!
//! Each digit is a set of stroke polylines in the unit square. A seeded
//! affine jitter (rotation, scale, shear, shift), per-vertex wobble and a
//! random pen width are applied, then strokes are rendered anti-aliased
//! onto a 28×28 canvas, roughly matching the MNIST framing (digit inside a
//! 20×20 box, centred).

use std::f64::consts::{PI, TAU};

use boltzlens_core::rng::{derive_seed, seeded};
use rand::Rng;

use crate::idx::SourceImage;

pub const GLYPH_SIDE: usize = 28;
const BOX: f64 = 20.0;
const GLYPH_STREAM: u64 = 0x474c_5950;

type Stroke = Vec<(f64, f64)>;

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64, from: f64, to: f64, n: usize) -> Stroke {
    (0..=n)
        .map(|i| {
            let t = from + (to - from) * i as f64 / n as f64;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

fn strokes(digit: u8) -> Vec<Stroke> {
    match digit {
        0 => vec![ellipse(0.5, 0.5, 0.3, 0.45, 0.0, TAU, 32)],
        1 => vec![vec![(0.35, 0.2), (0.55, 0.03), (0.55, 0.97)]],
        2 => vec![vec![
            (0.2, 0.25),
            (0.3, 0.1),
            (0.5, 0.03),
            (0.7, 0.1),
            (0.78, 0.28),
            (0.7, 0.45),
            (0.2, 0.95),
            (0.85, 0.95),
        ]],
        3 => vec![
            vec![(0.2, 0.1), (0.5, 0.03), (0.75, 0.13), (0.76, 0.33), (0.5, 0.48), (0.78, 0.6), (0.8, 0.84), (0.52, 0.97), (0.2, 0.88)],
            vec![(0.35, 0.48), (0.5, 0.48)],
        ],
        4 => vec![vec![(0.68, 0.97), (0.68, 0.03), (0.15, 0.66), (0.88, 0.66)]],
        5 => vec![vec![
            (0.8, 0.04),
            (0.27, 0.04),
            (0.22, 0.45),
            (0.5, 0.38),
            (0.75, 0.5),
            (0.8, 0.72),
            (0.65, 0.92),
            (0.4, 0.97),
            (0.2, 0.87),
        ]],
        6 => {
            let mut s = vec![(0.72, 0.03), (0.45, 0.2), (0.28, 0.45)];
            s.extend(ellipse(0.5, 0.72, 0.25, 0.24, PI, PI + TAU, 24));
            vec![s]
        }
        7 => vec![vec![(0.15, 0.04), (0.85, 0.04), (0.4, 0.97)]],
        8 => vec![ellipse(0.5, 0.26, 0.21, 0.22, 0.0, TAU, 24), ellipse(0.5, 0.72, 0.26, 0.25, 0.0, TAU, 24)],
        9 => {
            let mut s = ellipse(0.48, 0.3, 0.26, 0.25, 0.0, TAU, 24);
            s.extend([(0.72, 0.6), (0.64, 0.97)]);
            vec![s]
        }
        _ => panic!("digit out of range: {digit}"),
    }
}

fn seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// Renders digit `digit` with jitter drawn from `seed`.
pub fn render_digit(digit: u8, seed: u64) -> SourceImage {
    let mut rng = seeded(seed);
    let angle = rng.gen_range(-0.2..0.2);
    let scale = rng.gen_range(0.78..1.0);
    let aspect = rng.gen_range(0.85..1.15);
    let shear = rng.gen_range(-0.2..0.2);
    let shift = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let pen = rng.gen_range(1.0..1.8);
    let (sin, cos) = f64::sin_cos(angle);
    let centre = GLYPH_SIDE as f64 / 2.0;

    let segments: Vec<((f64, f64), (f64, f64))> = strokes(digit)
        .into_iter()
        .flat_map(|stroke| {
            let pts: Vec<(f64, f64)> = stroke
                .into_iter()
                .map(|(x, y)| {
                    let (x, y) = (x + rng.gen_range(-0.02..0.02) - 0.5, y + rng.gen_range(-0.02..0.02) - 0.5);
                    let (x, y) = ((x + shear * y) * scale * aspect * BOX, y * scale * BOX);
                    (centre + shift.0 + cos * x - sin * y, centre + shift.1 + sin * x + cos * y)
                })
                .collect();
            pts.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>()
        })
        .collect();

    let mut pixels = Vec::with_capacity(GLYPH_SIDE * GLYPH_SIDE);
    for r in 0..GLYPH_SIDE {
        for c in 0..GLYPH_SIDE {
            let p = (c as f64 + 0.5, r as f64 + 0.5);
            let d = segments.iter().map(|&(a, b)| seg_dist(p, a, b)).fold(f64::INFINITY, f64::min);
            let ink = (pen + 0.5 - d).clamp(0.0, 1.0);
            pixels.push((ink * 255.0).round() as u8);
        }
    }
    SourceImage {
        rows: GLYPH_SIDE,
        cols: GLYPH_SIDE,
        pixels,
        label: digit,
        id: format!("glyph-{digit}-{seed:016x}"),
    }
}

/// `per_class` renderings of every digit, interleaved 0..9, 0..9, …
pub fn render_corpus(per_class: usize, seed: u64) -> Vec<SourceImage> {
    (0..per_class)
        .flat_map(|i| (0..10u8).map(move |d| render_digit(d, derive_seed(seed, GLYPH_STREAM + d as u64, i as u64))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{binarize, DEFAULT_THRESHOLD};

    #[test]
    fn deterministic_and_varied() {
        assert_eq!(render_digit(4, 9), render_digit(4, 9));
        assert_ne!(render_digit(4, 9).pixels, render_digit(4, 10).pixels);
    }

    #[test]
    fn every_digit_has_reasonable_ink_inside_frame() {
        for seed in 0..50 {
            for d in 0..10 {
                let img = render_digit(d, seed);
                let m = binarize(&img, DEFAULT_THRESHOLD);
                let ink = m.count();
                assert!((40..400).contains(&ink), "digit {d} seed {seed}: {ink}");
                for i in 0..GLYPH_SIDE {
                    assert!(!m.get(0, i) && !m.get(GLYPH_SIDE - 1, i) && !m.get(i, 0) && !m.get(i, GLYPH_SIDE - 1));
                }
            }
        }
    }

    #[test]
    fn corpus_layout() {
        let c = render_corpus(3, 1);
        assert_eq!(c.len(), 30);
        assert_eq!(c.iter().map(|s| s.label).take(12).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0, 1]);
    }
}
