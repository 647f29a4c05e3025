//! Critical load for uncorrelated and uniformly correlated teachers.
//!
//!     cargo run --release --example critical_load

use nalgebra::DMatrix;
use rbmts::model::uniform_covariance;
use rbmts::stability::{critical_load, critical_load_uniform};

fn main() -> rbmts::Result<()> {
    let r = critical_load(&DMatrix::identity(2, 2), 1.2, 1.2)?;
    println!("Q = I, beta = beta* = 1.2: alpha_crit = {:.6} (1/1.2^4 = {:.6})", r.alpha_crit, 1.2f64.powi(-4));

    println!("\n{:>4} {:>4} {:>12} {:>12} {:>12}", "P*", "c", "d", "lambda_max", "alpha_crit");
    for p_star in [2, 3, 5] {
        for c in [0.0, 0.3, 0.6, 0.9] {
            let u = critical_load_uniform(c, 1.0, 1.0, p_star)?;
            // the dense route agrees with the closed form
            let dense = critical_load(&uniform_covariance(p_star, c), 1.0, 1.0)?;
            assert!((dense.lambda_max - u.lambda_max).abs() < 1e-10);
            let d = if p_star > 1 { u.r[(0, 1)] } else { 0.0 };
            println!("{p_star:>4} {c:>4.1} {d:>12.6} {:>12.6} {:>12.6}", u.lambda_max, u.alpha_crit);
        }
    }
    Ok(())
}
