//! Critical load averaged over random teacher correlations.
//!
//!     cargo run --release --example wishart_correlations

use rbmts::sampling::{rng_from_seed, sample_projected_wishart};
use rbmts::stability::{critical_load_uniform, wishart_critical_statistics};

fn main() -> rbmts::Result<()> {
    let mut rng = rng_from_seed(7);
    let q = sample_projected_wishart(0.4, 4, 4, &mut rng)?;
    println!("one draw, c = 0.4, P = 4:\n{q:.3}");

    println!("{:>4} {:>5} {:>14} {:>10} {:>14}", "P*", "c", "mean a_crit", "std err", "uniform a_crit");
    for p_star in [2, 3, 5] {
        for c in [0.2, 0.4, 0.8] {
            let w = wishart_critical_statistics(c, p_star, 1.0, 1.0, 1000, &mut rng)?;
            let u = critical_load_uniform(c, 1.0, 1.0, p_star)?;
            println!(
                "{p_star:>4} {c:>5.1} {:>14.5} {:>10.5} {:>14.5}",
                w.mean_alpha_crit, w.alpha_crit_standard_error, u.alpha_crit
            );
        }
    }
    Ok(())
}
