//! Full matrix saddle-point iteration for two teacher and three student
//! patterns, compared with the scalar equations.
//!
//!     cargo run --release --example saddle_point [alpha] [samples]

use nalgebra::DMatrix;
use rbmts::reduced::{solve_binary_psb, solve_spurious, ReducedConfig};
use rbmts::saddle::{solve, InitKind, SolverConfig};
use rbmts::Hyperparameters;

fn main() -> rbmts::Result<()> {
    let mut args = std::env::args().skip(1);
    let alpha: f64 = args.next().map(|a| a.parse().expect("alpha")).unwrap_or(2.0);
    let samples: usize = args.next().map(|a| a.parse().expect("samples")).unwrap_or(2000);

    let h = Hyperparameters::nishimori(1.2, alpha, 2, 3);
    let cfg = SolverConfig { n_gaussian_samples: samples, ..SolverConfig::default() };
    let t = std::time::Instant::now();
    let r = solve(&h, &DMatrix::identity(2, 2), &cfg, &InitKind::NearDiagonal { m0: 0.5, eps: 0.01 })?;
    println!(
        "alpha = {alpha}: converged = {} after {} iterations ({:.1?}), residual {:.2e}, se {:.2e}",
        r.converged,
        r.iterations,
        t.elapsed(),
        r.final_residual(),
        r.standard_error
    );
    println!("m ={:.4}q ={:.4}", r.state.m, r.state.q);

    let red = solve_binary_psb(1.2, 1.2, alpha, &ReducedConfig::default());
    let sp = solve_spurious(1.2, alpha, &ReducedConfig::default());
    println!("scalar system: m = {:.4}, q = {:.4}, spurious g = {:.4}", red.m, red.q, sp.g);
    Ok(())
}
