//! Prints one rendered source digit and its synthetic image regions as ASCII.

use boltzlens_synth::glyphs::render_digit;
use boltzlens_synth::mask::DEFAULT_THRESHOLD;
use boltzlens_synth::decompose_source;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    for d in 0..10 {
        let regions = decompose_source(&render_digit(d, seed), DEFAULT_THRESHOLD).expect("28x28 source").labels();
        println!("digit {d}");
        for row in regions.chunks(32) {
            println!("{}", row.iter().map(|&r| [' ', '.', '#', '@'][r as usize]).collect::<String>());
        }
    }
}
