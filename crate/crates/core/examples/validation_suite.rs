//! Runs the cross-validation suite and prints the report.
//!
//!     cargo run --release --example validation_suite [fast|full] [seed]

use rbmts::validation::{run_validation_suite, Level, Mutation};

fn main() {
    let mut args = std::env::args().skip(1);
    let level = match args.next().as_deref() {
        Some("full") => Level::Full,
        _ => Level::Fast,
    };
    let seed = args.next().map(|s| s.parse().expect("seed")).unwrap_or(0);
    let report = run_validation_suite(level, seed, Mutation::None);
    print!("{}", report.render());
    if !report.passed() {
        std::process::exit(1);
    }
}
