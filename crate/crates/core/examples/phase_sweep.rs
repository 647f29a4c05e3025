//! Coarse (alpha, T) grid of the scalar system on the Nishimori line, with
//! the critical-load line for reference. Writes CSV to stdout.
//!
//!     cargo run --release --example phase_sweep > phase.csv

use rbmts::cli::csv::{write_csv, Cell};
use rbmts::cli::grid::linspace;
use rbmts::reduced::{solve_binary_psb, ReducedConfig};

fn main() -> rbmts::Result<()> {
    let cfg = ReducedConfig::default();
    let header: Vec<String> = ["alpha", "T", "m", "q", "alpha_crit", "converged"].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for alpha in linspace(0.0, 3.0, 20) {
        for t in linspace(0.1, 1.2, 20) {
            let beta = 1.0 / t;
            let r = solve_binary_psb(beta, beta, alpha, &cfg);
            rows.push(vec![
                Cell::from(alpha),
                t.into(),
                r.m.into(),
                r.q.into(),
                beta.powi(-4).into(),
                r.converged.into(),
            ]);
        }
    }
    write_csv(&mut std::io::stdout().lock(), &header, &rows)
}
