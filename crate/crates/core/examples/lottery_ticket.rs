//! Lottery-ticket experiment on a reduced budget.
//!
//!     cargo run --release --example lottery_ticket [N] [epochs]

use rbmts::sampling::rng_from_seed;
use rbmts::sim::{run_lottery_experiment, LotteryConfig};

fn main() -> rbmts::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|a| a.parse().expect("N")).unwrap_or(128);
    let epochs: usize = args.next().map(|a| a.parse().expect("epochs")).unwrap_or(200);
    let cfg = LotteryConfig {
        n,
        pretrain_epochs: epochs,
        epochs,
        gibbs_sweeps: 50,
        ..LotteryConfig::default()
    };
    let r = run_lottery_experiment(&cfg, &mut rng_from_seed(3))?;
    println!("{:>6} {:>12} {:>10}", "epoch", "median B-A", "MAD");
    for t in (0..=epochs).step_by((epochs / 20).max(1)) {
        println!("{t:>6} {:>12.4} {:>10.4}", r.median_diff[t], r.mad_diff[t]);
    }
    Ok(())
}
