//! Fast self-checks of the invariants everything else relies on.

use boltzlens_core::bayesnet::{decompose, factor_normalization_check, posterior_via_elimination};
use boltzlens_core::gradcheck::check_gradients;
use boltzlens_core::layers::{conv2d_forward, conv2d_im2col, ConvLayerParams};
use boltzlens_core::problens::{BinEdges, PriorSpec};
use boltzlens_core::rng::{seeded, BoxMuller};
use boltzlens_core::{checkpoint, forward_with_trace, init_params, NetworkSpec, Preset, Tensor};
use boltzlens_synth::glyphs::render_corpus;
use boltzlens_synth::mask::{decompose_mask, extract_edge, Mask, DEFAULT_THRESHOLD};
use boltzlens_synth::{decompose_source, gaussian_draw, generate_sample, GeneratorOptions};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> Check {
    match f() {
        Ok(detail) => Check { name, passed: true, detail },
        Err(detail) => Check { name, passed: false, detail },
    }
}

fn gaussian(seed: u64, shape: &[usize], std: f64) -> Tensor<f64> {
    let mut rng = seeded(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), BoxMuller::new(0.0, std).sample_n(&mut rng, n)).expect("shape matches")
}

fn gradient_check() -> Result<String, String> {
    let net = init_params::<f64>(&NetworkSpec::tiny(), 11).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for s in 0..3u64 {
        let r = check_gradients(&net, &gaussian(s, &[12, 12, 1], 1.0), (s * 3 % 8) as usize, 1e-5).map_err(|e| e.to_string())?;
        worst = worst.max(r.max_rel_error);
        checked += r.checked;
    }
    let msg = format!("{checked} parameters, max relative error {worst:.2e}");
    if worst < 1e-4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn im2col_check() -> Result<String, String> {
    let mut rng = seeded(21);
    let mut worst = 0.0f64;
    for case in 0..50u64 {
        let (k, ic, oc) = (rng.gen_range(1..=5), rng.gen_range(1..=4), rng.gen_range(1..=5));
        let (h, w) = (rng.gen_range(k..k + 8), rng.gen_range(k..k + 8));
        let x = gaussian(case, &[h, w, ic], 1.0);
        let p = ConvLayerParams::new(gaussian(case + 1000, &[k, k, ic, oc], 1.0), gaussian(case + 2000, &[oc], 1.0)).map_err(|e| e.to_string())?;
        let a = conv2d_forward(&x, &p).map_err(|e| e.to_string())?;
        let b = conv2d_im2col(&x, &p).map_err(|e| e.to_string())?;
        worst = worst.max(a.max_abs_diff(&b).ok_or("shape mismatch")?);
    }
    let msg = format!("50 cases, max abs diff {worst:.2e}");
    if worst < 1e-10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn posterior_check() -> Result<String, String> {
    let edges = BinEdges::default_for(&PriorSpec::default());
    for preset in Preset::ALL {
        let net = init_params::<f64>(&preset.spec(), 31).map_err(|e| e.to_string())?;
        for s in 0..5u64 {
            let x = gaussian(s, &[32, 32, 1], 32.0);
            let chain = decompose(&net, &x, &edges).map_err(|e| e.to_string())?;
            let post = posterior_via_elimination(&chain).map_err(|e| e.to_string())?;
            let (probs, _) = forward_with_trace(&net, &x).map_err(|e| e.to_string())?;
            if post.data() != probs.data() {
                return Err(format!("{preset}: posterior differs from forward softmax"));
            }
            if let Some(bad) = factor_normalization_check(&chain).into_iter().find(|c| !c.passed) {
                return Err(format!("{preset}: factor {} sums to {}", bad.name, bad.total_mass));
            }
        }
    }
    Ok("3 presets × 5 inputs, bitwise equal, all factors normalised".into())
}

fn partition_check() -> Result<String, String> {
    let square = Mask::from_fn(32, 32, |r, c| (10..14).contains(&r) && (10..14).contains(&c));
    let sizes = decompose_mask(&square, &extract_edge(&square)).sizes();
    if sizes != [988, 20, 12, 4] {
        return Err(format!("4×4 square decomposed into {sizes:?}"));
    }
    let sources = render_corpus(10, 41);
    for src in &sources {
        let d = decompose_source(src, DEFAULT_THRESHOLD).map_err(|e| e.to_string())?;
        if !d.is_partition() {
            return Err(format!("{}: regions do not partition the grid", src.id));
        }
        let s = generate_sample(src, 7, &GeneratorOptions::default()).map_err(|e| e.to_string())?;
        let mut a = s.pixels.data().to_vec();
        let mut b = gaussian_draw(7);
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        if a != b {
            return Err(format!("{}: pixels are not a permutation of the draw", src.id));
        }
    }
    Ok(format!("{} sources partitioned; samples permute their draws", sources.len()))
}

fn checkpoint_check() -> Result<String, String> {
    let net = init_params::<f64>(&Preset::Cnn1.spec(), 51).map_err(|e| e.to_string())?;
    let bytes = checkpoint::encode(&net).map_err(|e| e.to_string())?;
    let back = checkpoint::decode::<f64>(&bytes).map_err(|e| e.to_string())?;
    if back == net {
        Ok(format!("{} bytes round-trip exactly", bytes.len()))
    } else {
        Err("decoded network differs".into())
    }
}

/// Runs every check in f64.
pub fn run_verify() -> Vec<Check> {
    vec![
        check("gradient", gradient_check),
        check("im2col", im2col_check),
        check("posterior", posterior_check),
        check("partition", partition_check),
        check("checkpoint", checkpoint_check),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_verify() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
