//! Command-line front end: option parsing, config files and dispatch.
//!
//! Every flag `--some-key` has a config-file twin `some_key` in the section
//! named after the subcommand. Flags win over the file.

pub mod commands;
pub mod csv;
pub mod grid;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable holding the worker count for parallel runs.
pub const WORKERS_ENV: &str = "RBMTS_WORKERS";

/// Declares an option set whose fields are all optional, usable both as
/// clap arguments and as a config-file section.
macro_rules! options {
    ($(#[$m:meta])* $name:ident { $( $(#[$fm:meta])* $field:ident : $ty:ty ),* $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Default, PartialEq, clap::Args, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $(
                $(#[$fm])*
                #[arg(long)]
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }

        impl $name {
            /// Fields set in `self` win over `base`.
            pub fn over(self, base: Self) -> Self {
                $name { $( $field: self.$field.or(base.$field), )* }
            }
        }
    };
}

options! {
    /// Full saddle-point solve at one parameter point.
    SolveOptions {
        /// Load M/N.
        alpha: f64,
        /// Student inverse temperature.
        beta: f64,
        /// Teacher inverse temperature.
        beta_star: f64,
        /// Student temperature (sets beta = 1/T).
        temperature: f64,
        /// Use beta_star = beta.
        #[arg(num_args = 0..=1, default_missing_value = "true")]
        nishimori: bool,
        p: usize,
        p_star: usize,
        /// Uniform teacher correlation (or Wishart strength).
        c: f64,
        /// uniform | wishart
        covariance: String,
        wishart_d: usize,
        wishart_seed: u64,
        /// binary | gaussian
        student_prior: String,
        /// binary | gaussian
        teacher_prior: String,
        n_gaussian_samples: usize,
        tolerance: f64,
        max_iters: usize,
        dt_conjugate: f64,
        dt_order: f64,
        seed: u64,
        /// fresh | frozen
        z_sampling: String,
        window: usize,
        /// paramagnetic | near_diagonal | off_diagonal | random
        init: String,
        m0: f64,
        eps: f64,
        /// Off-diagonal entry as "teacher,student" (0-based).
        pair: String,
        /// Student units held exchangeable during the solve, "a,b".
        tie: String,
    }
}

options! {
    /// Reduced scalar equations.
    ReducedOptions {
        alpha: f64,
        beta: f64,
        beta_star: f64,
        temperature: f64,
        #[arg(num_args = 0..=1, default_missing_value = "true")]
        nishimori: bool,
        /// binary | spurious | gaussian
        system: String,
        start: f64,
        damping: f64,
        tolerance: f64,
        max_iters: usize,
    }
}

options! {
    /// Critical load.
    StabilityOptions {
        c: f64,
        p_star: usize,
        beta: f64,
        beta_star: f64,
        temperature: f64,
        #[arg(num_args = 0..=1, default_missing_value = "true")]
        nishimori: bool,
        /// uniform | wishart
        covariance: String,
        /// Number of Wishart draws for the averaged critical load.
        wishart_draws: usize,
        seed: u64,
    }
}

options! {
    /// Free entropy of a solved state, optionally against a second one.
    FreeEntropyOptions {
        alpha: f64,
        beta: f64,
        beta_star: f64,
        temperature: f64,
        #[arg(num_args = 0..=1, default_missing_value = "true")]
        nishimori: bool,
        p: usize,
        p_star: usize,
        c: f64,
        covariance: String,
        wishart_d: usize,
        wishart_seed: u64,
        student_prior: String,
        teacher_prior: String,
        n_gaussian_samples: usize,
        tolerance: f64,
        max_iters: usize,
        dt_conjugate: f64,
        dt_order: f64,
        seed: u64,
        z_sampling: String,
        window: usize,
        init: String,
        m0: f64,
        eps: f64,
        pair: String,
        tie: String,
        /// Init of the second state (same keys as `init`).
        versus: String,
        versus_pair: String,
        /// Tie for the second state; defaults to the two students sharing
        /// a teacher under an off-diagonal `versus`. "none" disables it.
        versus_tie: String,
        /// Samples for the free-entropy average.
        fe_samples: usize,
    }
}

options! {
    /// Finite-size Monte Carlo of one teacher–student instance.
    SimulateOptions {
        /// Visible dimension N.
        n: usize,
        alpha: f64,
        beta: f64,
        beta_star: f64,
        temperature: f64,
        #[arg(num_args = 0..=1, default_missing_value = "true")]
        nishimori: bool,
        p: usize,
        p_star: usize,
        c: f64,
        covariance: String,
        wishart_d: usize,
        wishart_seed: u64,
        student_prior: String,
        teacher_prior: String,
        /// Student sweeps (binary) or Langevin steps (gaussian).
        sweeps: usize,
        gibbs_sweeps: usize,
        /// random | near_diagonal | off_diagonal
        init: String,
        m0: f64,
        pair: String,
        /// Strength of the bias toward the initial assignment (0 = off).
        external_field: f64,
        step_size: f64,
        decay: f64,
        friction: f64,
        cd_steps: usize,
        /// First epoch of the summary window.
        measure_from: usize,
        seed: u64,
    }
}

options! {
    /// Lottery-ticket experiment.
    LotteryOptions {
        n: usize,
        p: usize,
        p_star: usize,
        beta: f64,
        beta_star: f64,
        temperature: f64,
        #[arg(num_args = 0..=1, default_missing_value = "true")]
        nishimori: bool,
        /// Comma-separated loads.
        alphas: String,
        pretrain_epochs: usize,
        epochs: usize,
        gibbs_sweeps: usize,
        step_size: f64,
        decay: f64,
        friction: f64,
        cd_steps: usize,
        seed: u64,
    }
}

options! {
    /// Grid of solves written as one CSV.
    SweepOptions {
        /// Axes as name=start:stop:count, comma separated. Names: alpha, T,
        /// beta, beta_star, T_star, c, m0.
        grid: String,
        /// solve | reduced
        task: String,
        alpha: f64,
        beta: f64,
        beta_star: f64,
        temperature: f64,
        #[arg(num_args = 0..=1, default_missing_value = "true")]
        nishimori: bool,
        p: usize,
        p_star: usize,
        c: f64,
        covariance: String,
        wishart_d: usize,
        wishart_seed: u64,
        student_prior: String,
        teacher_prior: String,
        n_gaussian_samples: usize,
        tolerance: f64,
        max_iters: usize,
        dt_conjugate: f64,
        dt_order: f64,
        seed: u64,
        z_sampling: String,
        window: usize,
        init: String,
        m0: f64,
        eps: f64,
        pair: String,
        tie: String,
        /// Reduced system for task = reduced.
        system: String,
        start: f64,
        damping: f64,
    }
}

options! {
    /// Cross-validation suite.
    ValidateOptions {
        /// fast | full
        level: String,
        seed: u64,
        /// Deliberate defect to check that the suite notices it: flip-d
        #[arg(hide = true)]
        mutate: String,
    }
}

#[derive(Debug, Parser)]
#[command(name = "rbmts", version, about = "Teacher-student RBM theory and simulation")]
pub struct Cli {
    /// TOML file with one section per subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for CSV and manifest output (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    Solve(SolveOptions),
    Reduced(ReducedOptions),
    Stability(StabilityOptions),
    FreeEntropy(FreeEntropyOptions),
    Simulate(SimulateOptions),
    Lottery(LotteryOptions),
    Sweep(SweepOptions),
    Validate(ValidateOptions),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub solve: SolveOptions,
    #[serde(default)]
    pub reduced: ReducedOptions,
    #[serde(default)]
    pub stability: StabilityOptions,
    #[serde(default, alias = "free-entropy")]
    pub free_entropy: FreeEntropyOptions,
    #[serde(default)]
    pub simulate: SimulateOptions,
    #[serde(default)]
    pub lottery: LotteryOptions,
    #[serde(default)]
    pub sweep: SweepOptions,
    #[serde(default)]
    pub validate: ValidateOptions,
}

pub fn read_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl Command {
    /// Applies the matching config section under the command-line values.
    pub fn with_config(self, file: ConfigFile) -> Command {
        match self {
            Command::Solve(o) => Command::Solve(o.over(file.solve)),
            Command::Reduced(o) => Command::Reduced(o.over(file.reduced)),
            Command::Stability(o) => Command::Stability(o.over(file.stability)),
            Command::FreeEntropy(o) => Command::FreeEntropy(o.over(file.free_entropy)),
            Command::Simulate(o) => Command::Simulate(o.over(file.simulate)),
            Command::Lottery(o) => Command::Lottery(o.over(file.lottery)),
            Command::Sweep(o) => Command::Sweep(o.over(file.sweep)),
            Command::Validate(o) => Command::Validate(o.over(file.validate)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Reduced(_) => "reduced",
            Command::Stability(_) => "stability",
            Command::FreeEntropy(_) => "free-entropy",
            Command::Simulate(_) => "simulate",
            Command::Lottery(_) => "lottery",
            Command::Sweep(_) => "sweep",
            Command::Validate(_) => "validate",
        }
    }
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const DIVERGED: i32 = 2;
    pub const VALIDATION_FAILED: i32 = 3;
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    let command = match &cli.config {
        Some(path) => match read_config(path) {
            Ok(file) => cli.command.clone().with_config(file),
            Err(e) => {
                eprintln!("error: {e}");
                return exit::CONFIG;
            }
        },
        None => cli.command.clone(),
    };
    match commands::execute(&command, cli.out.as_deref()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if is_config_error(&e) {
                exit::CONFIG
            } else {
                exit::DIVERGED
            }
        }
    }
}

pub(crate) fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::Invalid(_)
            | Error::ParameterOutOfRange { .. }
            | Error::DimensionMismatch { .. }
            | Error::NonPsdCovariance { .. }
            | Error::NonPsdTransformedCovariance { .. }
            | Error::EnumerationCapExceeded { .. }
    )
}
