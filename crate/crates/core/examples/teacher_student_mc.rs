//! Metropolis training of a binary student on teacher data, compared with
//! the scalar theory.
//!
//!     cargo run --release --example teacher_student_mc [N] [sweeps]

use rbmts::reduced::{solve_binary_psb, ReducedConfig};
use rbmts::sampling::rng_from_seed;
use rbmts::sim::{generate_teacher_data, random_patterns, train_student_binary, SimulationConfig};
use rbmts::PatternKind;

fn main() -> rbmts::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|a| a.parse().expect("N")).unwrap_or(256);
    let sweeps: usize = args.next().map(|a| a.parse().expect("sweeps")).unwrap_or(400);
    let beta = 1.2;

    println!("{:>6} {:>10} {:>10} {:>10}", "alpha", "mean |m|", "std", "theory");
    for (k, alpha) in [0.3, 1.0, 2.0].into_iter().enumerate() {
        let mut rng = rng_from_seed(k as u64);
        let teacher = random_patterns(1, n, PatternKind::Binary, &mut rng);
        let m = (alpha * n as f64).round() as usize;
        let data = generate_teacher_data(&teacher, beta, m, 200, &mut rng)?;
        let init = random_patterns(1, n, PatternKind::Binary, &mut rng);
        let cfg = SimulationConfig { n, m, mc_sweeps: sweeps, ..SimulationConfig::default() };
        let run = train_student_binary(&data, &teacher, beta, &init, &cfg, &mut rng)?;
        let mean = run.trace.mean_abs(sweeps / 2).expect("non-empty window")[(0, 0)];
        let (_, sd) = run.trace.summary(sweeps / 2).expect("non-empty window");
        let theory = solve_binary_psb(beta, beta, alpha, &ReducedConfig::default()).m;
        println!("{alpha:>6.2} {mean:>10.4} {:>10.4} {theory:>10.4}", sd[(0, 0)]);
    }
    Ok(())
}
