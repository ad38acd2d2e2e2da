//! Writes a truncated Burr sample as `x,y` CSV to stdout.
//!
//! `cargo run --example make_fixture -- N P SEED`

use trunctail::model::{sample_truncated, TruncationDesign};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let capital_n: usize = arg(0, "300").parse().expect("N");
    let p: f64 = arg(1, "0.9").parse().expect("P");
    let seed: u64 = arg(2, "2024").parse().expect("SEED");
    let design = TruncationDesign::from_observed_fraction(0.6, p, 0.25, capital_n).expect("design");
    let sample = sample_truncated(&design, seed).expect("sample");
    println!("x,y");
    for o in sample.pairs() {
        println!("{},{}", o.x, o.y.as_f64());
    }
}
