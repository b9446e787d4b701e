//! Rough forward/backward throughput for the preset networks.
//!
//! `cargo run --release -p boltzlens-core --example throughput`

use std::time::Instant;

use boltzlens_core::{init_params, loss_and_gradients, Preset, Scalar, Tensor};

fn run<T: Scalar>(preset: Preset, n: usize) {
    let net = init_params::<T>(&preset.spec(), 1).unwrap();
    let x = Tensor::from_fn(&[32, 32, 1], |i| T::from_f64_lossy(((i * 7919) % 97) as f64 - 48.0));
    let t = Instant::now();
    for i in 0..n {
        let _ = loss_and_gradients(&net, &x, i % 10).unwrap();
    }
    let train = t.elapsed().as_secs_f64() / n as f64;
    let t = Instant::now();
    for _ in 0..n {
        let _ = net.predict(&x).unwrap();
    }
    let infer = t.elapsed().as_secs_f64() / n as f64;
    println!("{preset} {}: fwd+bwd {:.3} ms, fwd {:.3} ms", T::NAME, train * 1e3, infer * 1e3);
}

fn main() {
    for preset in Preset::ALL {
        run::<f64>(preset, 300);
        run::<f32>(preset, 300);
    }
}
