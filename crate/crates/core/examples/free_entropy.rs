//! Free entropy of the one-to-one solution against a partial solution where
//! two students share a teacher, on common random numbers.
//!
//!     cargo run --release --example free_entropy [alpha] [samples]

use nalgebra::DMatrix;
use rbmts::free_entropy::compare_free_entropy;
use rbmts::saddle::{solve, InitKind, SolverConfig};
use rbmts::sampling::rng_from_seed;
use rbmts::Hyperparameters;

fn main() -> rbmts::Result<()> {
    let mut args = std::env::args().skip(1);
    let alpha: f64 = args.next().map(|a| a.parse().expect("alpha")).unwrap_or(2.5);
    let samples: usize = args.next().map(|a| a.parse().expect("samples")).unwrap_or(2000);

    let q = DMatrix::identity(2, 2);
    let h = Hyperparameters::nishimori(1.2, alpha, 2, 3);
    let cfg = SolverConfig { n_gaussian_samples: samples, ..SolverConfig::default() };
    let psb = solve(&h, &q, &cfg, &InitKind::NearDiagonal { m0: 0.5, eps: 0.01 })?;
    // students 0 and 2 both start on teacher 0; without the tie, sampling
    // noise separates them and the run relabels into the one-to-one state
    let tied = SolverConfig { tie: Some((0, 2)), ..cfg.clone() };
    let partial = solve(&h, &q, &tied, &InitKind::OffDiagonal { m0: 0.5, eps: 0.01, pair: (0, 2) })?;
    println!("one-to-one m ={:.3}", psb.state.m);
    println!("partial    m ={:.3}", partial.state.m);

    let d = compare_free_entropy(&psb.state, &partial.state, &h, &q, 100_000, &mut rng_from_seed(1))?;
    println!("f(one-to-one) = {:.6} +- {:.1e}", d.first.value, d.first.standard_error);
    println!("f(partial)    = {:.6} +- {:.1e}", d.second.value, d.second.standard_error);
    println!("difference    = {:.6} +- {:.1e}", d.difference, d.standard_error);
    Ok(())
}
