//! Scalar fixed points: Mattis magnetization and spin-glass overlap versus load.
//!
//!     cargo run --release --example reduced_equations

use rbmts::reduced::{scan_binary_psb, solve_gaussian_psb, solve_spurious, ReducedConfig};

fn main() {
    let beta: f64 = 1.2;
    let cfg = ReducedConfig::default();
    let alphas: Vec<f64> = (0..=16).map(|k| 0.25 * k as f64).collect();
    println!("beta = beta* = {beta}, alpha_crit = {:.4}", beta.powi(-4));
    println!("{:>6} {:>10} {:>10} {:>10} {:>12} {:>10}", "alpha", "m (warm)", "m (cold)", "q", "g spurious", "m gauss");
    for scan in scan_binary_psb(beta, beta, &alphas, &cfg) {
        let g = solve_spurious(beta, scan.alpha, &cfg);
        let gauss = solve_gaussian_psb(beta, beta, scan.alpha, &cfg);
        println!(
            "{:>6.2} {:>10.6} {:>10.6} {:>10.6} {:>12.6} {:>10.6}",
            scan.alpha, scan.warm.m, scan.cold.m, scan.warm.q, g.g, gauss.m
        );
    }
}
