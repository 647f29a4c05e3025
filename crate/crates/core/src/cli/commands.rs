//! Execution of parsed subcommands.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::csv::{emit_csv, write_csv, Cell};
use super::grid::{grid_points, parse_grid};
use super::*;
use crate::error::{Error, Result};
use crate::free_entropy::compare_free_entropy;
use crate::model::{CovarianceSpec, Hyperparameters, PatternKind, StudentPrior, TeacherPrior};
use crate::reduced::{self, ReducedConfig};
use crate::saddle::{self, InitKind, SolveResult, SolverConfig, ZSampling};
use crate::sampling::{derive_seed, rng_from_seed, sample_binary_arcsine, sample_gaussian_patterns};
use crate::sim::{
    self, generate_teacher_data, near_teacher_patterns, random_patterns, ExternalField, LangevinConfig, LotteryConfig,
    SimulationConfig,
};
use crate::stability::{critical_load_uniform, wishart_critical_statistics};
use crate::validation::{run_validation_suite, Level, Mutation};

const DEFAULT_BETA: f64 = 1.2;
const DEFAULT_SEED: u64 = 0;

/// Runs one command, writing to `out` (a directory) or stdout.
pub fn execute(cmd: &Command, out: Option<&Path>) -> Result<i32> {
    let workers = worker_count()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    if let Command::Validate(o) = cmd {
        return pool.install(|| validate(o, out));
    }
    let output = pool.install(|| match cmd {
        Command::Solve(o) => solve(o),
        Command::Reduced(o) => reduced_cmd(o),
        Command::Stability(o) => stability(o),
        Command::FreeEntropy(o) => free_entropy(o),
        Command::Simulate(o) => simulate(o),
        Command::Lottery(o) => lottery(o),
        Command::Sweep(o) => sweep(o),
        Command::Validate(_) => unreachable!(),
    })?;
    let config = match cmd {
        Command::Solve(o) => serde_json::to_value(o),
        Command::Reduced(o) => serde_json::to_value(o),
        Command::Stability(o) => serde_json::to_value(o),
        Command::FreeEntropy(o) => serde_json::to_value(o),
        Command::Simulate(o) => serde_json::to_value(o),
        Command::Lottery(o) => serde_json::to_value(o),
        Command::Sweep(o) => serde_json::to_value(o),
        Command::Validate(o) => serde_json::to_value(o),
    }
    .map_err(|e| Error::Config(e.to_string()))?;
    write_output(cmd.name(), &output, config, workers, out)?;
    Ok(output.exit_code)
}

/// Tabular result of one command.
#[derive(Debug, Clone, Default)]
pub struct Output {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub master_seed: Option<u64>,
    pub point_seeds: Vec<u64>,
    /// Resolved defaults worth recording (e.g. Langevin schedule).
    pub extra: serde_json::Map<String, serde_json::Value>,
    pub exit_code: i32,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    options: serde_json::Value,
    resolved: &'a serde_json::Map<String, serde_json::Value>,
    master_seed: Option<u64>,
    point_seeds: &'a [u64],
    workers: usize,
    unix_time: u64,
}

fn write_output(name: &str, o: &Output, options: serde_json::Value, workers: usize, out: Option<&Path>) -> Result<()> {
    let Some(dir) = out else {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        write_csv(&mut lock, &o.header, &o.rows)?;
        lock.flush()?;
        return Ok(());
    };
    std::fs::create_dir_all(dir)?;
    emit_csv(&dir.join(format!("{name}.csv")), &o.header, &o.rows)?;
    let manifest = Manifest {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        options,
        resolved: &o.extra,
        master_seed: o.master_seed,
        point_seeds: &o.point_seeds,
        workers,
        unix_time: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(dir.join(format!("{name}.manifest.json")), text + "\n")?;
    Ok(())
}

fn worker_count() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

// ---------------------------------------------------------------------------
// shared option resolution

/// `(beta, beta_star)` from `beta`, `temperature`, `beta_star`, `nishimori`.
fn temperatures(beta: Option<f64>, t: Option<f64>, beta_star: Option<f64>, nishimori: Option<bool>) -> Result<(f64, f64)> {
    temperatures_or(DEFAULT_BETA, beta, t, beta_star, nishimori)
}

fn temperatures_or(
    default: f64,
    beta: Option<f64>,
    t: Option<f64>,
    beta_star: Option<f64>,
    nishimori: Option<bool>,
) -> Result<(f64, f64)> {
    let beta = match (beta, t) {
        (Some(_), Some(_)) => return Err(Error::Config("give either beta or temperature, not both".into())),
        (Some(b), None) => b,
        (None, Some(t)) => {
            if !(t > 0.0) {
                return Err(Error::ParameterOutOfRange { name: "temperature", value: t, constraint: "> 0" });
            }
            1.0 / t
        }
        (None, None) => default,
    };
    let beta_star = if nishimori.unwrap_or(false) { beta } else { beta_star.unwrap_or(default) };
    Ok((beta, beta_star))
}

fn student_prior(s: Option<&str>) -> Result<StudentPrior> {
    match s.unwrap_or("binary") {
        "binary" => Ok(StudentPrior::BinaryUniform),
        "gaussian" => Ok(StudentPrior::StandardGaussian),
        other => Err(Error::Config(format!("unknown student prior `{other}` (binary | gaussian)"))),
    }
}

fn teacher_prior(s: Option<&str>) -> Result<TeacherPrior> {
    match s.unwrap_or("binary") {
        "binary" => Ok(TeacherPrior::BinaryArcsine),
        "gaussian" => Ok(TeacherPrior::Gaussian),
        other => Err(Error::Config(format!("unknown teacher prior `{other}` (binary | gaussian)"))),
    }
}

fn covariance(kind: Option<&str>, c: Option<f64>, d: Option<usize>, seed: Option<u64>) -> Result<CovarianceSpec> {
    let c = c.unwrap_or(0.0);
    match kind.unwrap_or("uniform") {
        "uniform" if c == 0.0 => Ok(CovarianceSpec::Identity),
        "uniform" => Ok(CovarianceSpec::Uniform { c }),
        "wishart" => Ok(CovarianceSpec::Wishart { c, d: d.unwrap_or(0), seed: seed.unwrap_or(DEFAULT_SEED) }),
        other => Err(Error::Config(format!("unknown covariance `{other}` (uniform | wishart)"))),
    }
}

fn parse_pair(s: Option<&str>) -> Result<(usize, usize)> {
    let Some(s) = s else { return Ok((0, 1)) };
    let bad = || Error::Config(format!("pair `{s}` is not `teacher,student`"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn parse_tie(s: Option<&str>) -> Result<Option<(usize, usize)>> {
    match s {
        None | Some("none") => Ok(None),
        Some(s) => parse_pair(Some(s)).map(Some),
    }
}

fn init_kind(name: Option<&str>, m0: Option<f64>, eps: Option<f64>, pair: Option<&str>, seed: u64) -> Result<InitKind> {
    let m0 = m0.unwrap_or(0.5);
    let eps = eps.unwrap_or(0.01);
    match name.unwrap_or("near_diagonal") {
        "paramagnetic" => Ok(InitKind::Paramagnetic),
        "near_diagonal" => Ok(InitKind::NearDiagonal { m0, eps }),
        "off_diagonal" => Ok(InitKind::OffDiagonal { m0, eps, pair: parse_pair(pair)? }),
        "random" => Ok(InitKind::Random { scale: m0, seed }),
        other => Err(Error::Config(format!(
            "unknown init `{other}` (paramagnetic | near_diagonal | off_diagonal | random)"
        ))),
    }
}

/// Everything needed for one saddle-point solve.
#[derive(Debug, Clone)]
struct SolveSpec {
    hyper: Hyperparameters,
    cov: CovarianceSpec,
    c: f64,
    solver: SolverConfig,
    init: InitKind,
}

impl SolveSpec {
    fn from_options(o: &SolveOptions) -> Result<Self> {
        let (beta, beta_star) = temperatures(o.beta, o.temperature, o.beta_star, o.nishimori)?;
        let d = SolverConfig::default();
        let seed = o.seed.unwrap_or(DEFAULT_SEED);
        let z_sampling = match o.z_sampling.as_deref().unwrap_or("fresh") {
            "fresh" => ZSampling::Fresh,
            "frozen" => ZSampling::Frozen,
            other => return Err(Error::Config(format!("unknown z_sampling `{other}` (fresh | frozen)"))),
        };
        let solver = SolverConfig {
            dt_conjugate: o.dt_conjugate.unwrap_or(d.dt_conjugate),
            dt_order: o.dt_order.unwrap_or(d.dt_order),
            n_gaussian_samples: o.n_gaussian_samples.unwrap_or(d.n_gaussian_samples),
            tolerance: o.tolerance.unwrap_or(d.tolerance),
            max_iters: o.max_iters.unwrap_or(d.max_iters),
            seed,
            z_sampling,
            window: o.window.unwrap_or(d.window),
            tie: parse_tie(o.tie.as_deref())?,
        };
        solver.check()?;
        let hyper = Hyperparameters {
            beta_star,
            beta,
            alpha: o.alpha.unwrap_or(1.0),
            p_star: o.p_star.unwrap_or(2),
            p: o.p.unwrap_or(2),
            student_prior: student_prior(o.student_prior.as_deref())?,
            teacher_prior: teacher_prior(o.teacher_prior.as_deref())?,
        };
        Ok(SolveSpec {
            hyper,
            cov: covariance(o.covariance.as_deref(), o.c, o.wishart_d, o.wishart_seed)?,
            c: o.c.unwrap_or(0.0),
            solver,
            init: init_kind(o.init.as_deref(), o.m0, o.eps, o.pair.as_deref(), seed)?,
        })
    }

    fn run(&self) -> Result<SolveResult> {
        let checked = crate::model::validate(&self.hyper, &self.cov)?;
        saddle::solve(&checked.hyper, &checked.q, &self.solver, &self.init)
    }
}

fn solve_header(p_star: usize, p: usize) -> Vec<String> {
    let mut h = header(&["alpha", "T", "beta", "beta_star", "c", "P", "P_star"]);
    for g in 0..p_star {
        for mu in 0..p {
            h.push(format!("m_{g}_{mu}"));
        }
    }
    for name in ["q", "s"] {
        for a in 0..p {
            for b in 0..p {
                h.push(format!("{name}_{a}_{b}"));
            }
        }
    }
    h.extend(header(&["residual", "iterations", "converged", "status"]));
    h
}

fn is_divergence(e: &Error) -> bool {
    matches!(
        e,
        Error::NonFiniteUpdate { .. }
            | Error::NonFiniteEnergy
            | Error::SingularPrecision { .. }
            | Error::SingularSampleCovariance
            | Error::DivergedTrajectory { .. }
    )
}

fn solve_row(spec: &SolveSpec, result: &Result<SolveResult>) -> Vec<Cell> {
    let h = &spec.hyper;
    let mut row: Vec<Cell> =
        vec![h.alpha.into(), (1.0 / h.beta).into(), h.beta.into(), h.beta_star.into(), spec.c.into(), h.p.into(), h.p_star.into()];
    let n_entries = h.p_star * h.p + 2 * h.p * h.p;
    match result {
        Ok(r) => {
            let st = &r.state;
            for g in 0..h.p_star {
                for mu in 0..h.p {
                    row.push(st.m[(g, mu)].into());
                }
            }
            for mat in [&st.q, &st.s] {
                for a in 0..h.p {
                    for b in 0..h.p {
                        row.push(mat[(a, b)].into());
                    }
                }
            }
            let status = if !st.is_finite() {
                "diverged"
            } else if r.converged {
                "converged"
            } else {
                "max_iters"
            };
            row.extend([r.final_residual().into(), r.iterations.into(), r.converged.into(), status.into()]);
        }
        Err(e) => {
            row.extend((0..n_entries).map(|_| Cell::Float(f64::NAN)));
            let status = if is_divergence(e) { "diverged" } else { "error" };
            row.extend([f64::NAN.into(), 0usize.into(), false.into(), status.into()]);
        }
    }
    row
}

fn row_status(row: &[Cell]) -> Option<&str> {
    match row.last() {
        Some(Cell::Text(s)) => Some(s.as_str()),
        _ => None,
    }
}

fn grid_exit_code(rows: &[Vec<Cell>]) -> i32 {
    if rows.iter().any(|r| matches!(row_status(r), Some("diverged") | Some("error"))) {
        exit::DIVERGED
    } else {
        exit::OK
    }
}

// ---------------------------------------------------------------------------
// subcommands

fn solve(o: &SolveOptions) -> Result<Output> {
    let spec = SolveSpec::from_options(o)?;
    let result = spec.run();
    if let Err(e) = &result {
        if is_config_error(e) {
            return Err(result.err().unwrap());
        }
        eprintln!("warning: {e}");
    }
    let rows = vec![solve_row(&spec, &result)];
    Ok(Output {
        header: solve_header(spec.hyper.p_star, spec.hyper.p),
        exit_code: grid_exit_code(&rows),
        rows,
        master_seed: Some(spec.solver.seed),
        ..Output::default()
    })
}

#[derive(Debug, Clone, Copy)]
enum ReducedSystem {
    Binary,
    Spurious,
    Gaussian,
}

fn reduced_system(s: Option<&str>) -> Result<ReducedSystem> {
    match s.unwrap_or("binary") {
        "binary" => Ok(ReducedSystem::Binary),
        "spurious" => Ok(ReducedSystem::Spurious),
        "gaussian" => Ok(ReducedSystem::Gaussian),
        other => Err(Error::Config(format!("unknown system `{other}` (binary | spurious | gaussian)"))),
    }
}

fn reduced_config(start: Option<f64>, damping: Option<f64>, tol: Option<f64>, iters: Option<usize>) -> Result<ReducedConfig> {
    let d = ReducedConfig::default();
    let cfg = ReducedConfig {
        damping: damping.unwrap_or(d.damping),
        tolerance: tol.unwrap_or(d.tolerance),
        max_iters: iters.unwrap_or(d.max_iters),
        start,
        ..d
    };
    if !(cfg.damping > 0.0 && cfg.damping <= 1.0) {
        return Err(Error::ParameterOutOfRange { name: "damping", value: cfg.damping, constraint: "0 < damping <= 1" });
    }
    Ok(cfg)
}

const REDUCED_COLUMNS: [&str; 14] = [
    "alpha", "T", "beta", "beta_star", "system", "m", "q", "g", "m_hat", "q_hat", "g_hat", "iterations", "converged",
    "status",
];

fn reduced_row(sys: ReducedSystem, nishimori: bool, alpha: f64, beta: f64, beta_star: f64, cfg: &ReducedConfig) -> Vec<Cell> {
    let nan = f64::NAN;
    let (name, vals, iterations, converged) = match sys {
        ReducedSystem::Binary => {
            let r = if nishimori {
                reduced::solve_binary_nishimori(beta, alpha, cfg)
            } else {
                reduced::solve_binary_psb(beta_star, beta, alpha, cfg)
            };
            ("binary", [r.m, r.q, nan, r.m_hat, r.q_hat, nan], r.iterations, r.converged)
        }
        ReducedSystem::Spurious => {
            let r = reduced::solve_spurious(beta, alpha, cfg);
            ("spurious", [nan, nan, r.g, nan, nan, r.g_hat], r.iterations, r.converged)
        }
        ReducedSystem::Gaussian => {
            let r = if nishimori {
                reduced::solve_gaussian_nishimori(beta, alpha, cfg)
            } else {
                reduced::solve_gaussian_psb(beta_star, beta, alpha, cfg)
            };
            ("gaussian", [r.m, r.q, r.g, r.m_hat, r.q_hat, r.g_hat], r.iterations, r.converged)
        }
    };
    let finite = vals.iter().all(|v| v.is_nan() || v.is_finite());
    let status = if !finite {
        "diverged"
    } else if converged {
        "converged"
    } else {
        "max_iters"
    };
    let mut row: Vec<Cell> = vec![alpha.into(), (1.0 / beta).into(), beta.into(), beta_star.into(), name.into()];
    row.extend(vals.iter().map(|v| Cell::Float(*v)));
    row.extend([iterations.into(), converged.into(), status.into()]);
    row
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange { name, value: v, constraint: "> 0" })
    }
}

fn reduced_cmd(o: &ReducedOptions) -> Result<Output> {
    let (beta, beta_star) = temperatures(o.beta, o.temperature, o.beta_star, o.nishimori)?;
    check_positive("beta", beta)?;
    check_positive("beta_star", beta_star)?;
    let alpha = o.alpha.unwrap_or(1.0);
    if !(alpha >= 0.0) {
        return Err(Error::ParameterOutOfRange { name: "alpha", value: alpha, constraint: ">= 0" });
    }
    let sys = reduced_system(o.system.as_deref())?;
    let cfg = reduced_config(o.start, o.damping, o.tolerance, o.max_iters)?;
    let rows = vec![reduced_row(sys, o.nishimori.unwrap_or(false), alpha, beta, beta_star, &cfg)];
    Ok(Output { header: header(&REDUCED_COLUMNS), exit_code: grid_exit_code(&rows), rows, ..Output::default() })
}

fn stability(o: &StabilityOptions) -> Result<Output> {
    let (beta, beta_star) = temperatures(o.beta, o.temperature, o.beta_star, o.nishimori)?;
    let c = o.c.unwrap_or(0.0);
    let p_star = o.p_star.unwrap_or(2);
    match o.covariance.as_deref().unwrap_or("uniform") {
        "uniform" => {
            let r = critical_load_uniform(c, beta_star, beta, p_star)?;
            Ok(Output {
                header: header(&["c", "p_star", "beta_star", "beta", "lambda_max", "alpha_crit"]),
                rows: vec![vec![c.into(), p_star.into(), beta_star.into(), beta.into(), r.lambda_max.into(), r.alpha_crit.into()]],
                ..Output::default()
            })
        }
        "wishart" => {
            let seed = o.seed.unwrap_or(DEFAULT_SEED);
            let draws = o.wishart_draws.unwrap_or(1000);
            let w = wishart_critical_statistics(c, p_star, beta_star, beta, draws, &mut rng_from_seed(seed))?;
            Ok(Output {
                header: header(&[
                    "c",
                    "p_star",
                    "beta_star",
                    "beta",
                    "draws",
                    "harmonic_lambda_max",
                    "mean_alpha_crit",
                    "alpha_crit_standard_error",
                ]),
                rows: vec![vec![
                    c.into(),
                    p_star.into(),
                    beta_star.into(),
                    beta.into(),
                    draws.into(),
                    w.harmonic_lambda_max.into(),
                    w.mean_alpha_crit.into(),
                    w.alpha_crit_standard_error.into(),
                ]],
                master_seed: Some(seed),
                ..Output::default()
            })
        }
        other => Err(Error::Config(format!("unknown covariance `{other}` (uniform | wishart)"))),
    }
}

fn free_entropy(o: &FreeEntropyOptions) -> Result<Output> {
    let base = SolveOptions {
        alpha: o.alpha,
        beta: o.beta,
        beta_star: o.beta_star,
        temperature: o.temperature,
        nishimori: o.nishimori,
        p: o.p,
        p_star: o.p_star,
        c: o.c,
        covariance: o.covariance.clone(),
        wishart_d: o.wishart_d,
        wishart_seed: o.wishart_seed,
        student_prior: o.student_prior.clone(),
        teacher_prior: o.teacher_prior.clone(),
        n_gaussian_samples: o.n_gaussian_samples,
        tolerance: o.tolerance,
        max_iters: o.max_iters,
        dt_conjugate: o.dt_conjugate,
        dt_order: o.dt_order,
        seed: o.seed,
        z_sampling: o.z_sampling.clone(),
        window: o.window,
        init: o.init.clone(),
        m0: o.m0,
        eps: o.eps,
        pair: o.pair.clone(),
        tie: o.tie.clone(),
    };
    let versus = o.versus.clone().unwrap_or_else(|| "off_diagonal".into());
    let versus_pair = o.versus_pair.clone().or(o.pair.clone());
    let versus_tie = match (&o.versus_tie, versus.as_str()) {
        (Some(t), _) => Some(t.clone()),
        (None, "off_diagonal") => {
            let (g, mu) = parse_pair(versus_pair.as_deref())?;
            Some(format!("{g},{mu}"))
        }
        (None, _) => None,
    };
    let first = SolveSpec::from_options(&base)?;
    let second = SolveSpec::from_options(&SolveOptions {
        init: Some(versus),
        pair: versus_pair,
        tie: versus_tie,
        ..base
    })?;
    let a = first.run()?;
    let b = second.run()?;
    let checked = crate::model::validate(&first.hyper, &first.cov)?;
    let seed = derive_seed(first.solver.seed, u64::MAX);
    let samples = o.fe_samples.unwrap_or(100_000);
    let d = compare_free_entropy(&a.state, &b.state, &checked.hyper, &checked.q, samples, &mut rng_from_seed(seed))?;
    let h = &first.hyper;
    let rows = vec![vec![
        h.alpha.into(),
        h.beta.into(),
        h.beta_star.into(),
        h.p.into(),
        h.p_star.into(),
        d.first.value.into(),
        d.first.standard_error.into(),
        a.converged.into(),
        d.second.value.into(),
        d.second.standard_error.into(),
        b.converged.into(),
        d.difference.into(),
        d.standard_error.into(),
    ]];
    Ok(Output {
        header: header(&[
            "alpha",
            "beta",
            "beta_star",
            "P",
            "P_star",
            "f_first",
            "se_first",
            "converged_first",
            "f_second",
            "se_second",
            "converged_second",
            "difference",
            "se_difference",
        ]),
        rows,
        master_seed: Some(first.solver.seed),
        point_seeds: vec![seed],
        ..Output::default()
    })
}

fn langevin_config(d: LangevinConfig, step: Option<f64>, decay: Option<f64>, friction: Option<f64>, cd: Option<usize>) -> LangevinConfig {
    LangevinConfig {
        step_size: step.unwrap_or(d.step_size),
        decay: decay.unwrap_or(d.decay),
        friction: friction.unwrap_or(d.friction),
        cd_steps: cd.unwrap_or(d.cd_steps),
        guard: d.guard,
    }
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn simulate(o: &SimulateOptions) -> Result<Output> {
    let (beta, beta_star) = temperatures(o.beta, o.temperature, o.beta_star, o.nishimori)?;
    let n = o.n.unwrap_or(512);
    let alpha = o.alpha.unwrap_or(1.0);
    let p = o.p.unwrap_or(1);
    let p_star = o.p_star.unwrap_or(1);
    let seed = o.seed.unwrap_or(DEFAULT_SEED);
    let hyper = Hyperparameters {
        beta_star,
        beta,
        alpha,
        p_star,
        p,
        student_prior: student_prior(o.student_prior.as_deref())?,
        teacher_prior: teacher_prior(o.teacher_prior.as_deref())?,
    };
    let checked = crate::model::validate(&hyper, &covariance(o.covariance.as_deref(), o.c, o.wishart_d, o.wishart_seed)?)?;
    let m = (alpha * n as f64).round() as usize;
    let sweeps = o.sweeps.unwrap_or(1000);
    let gibbs = o.gibbs_sweeps.unwrap_or(200);
    let m0 = o.m0.unwrap_or(0.5);
    let init = o.init.as_deref().unwrap_or("random");
    let assignment: Vec<Option<usize>> = match init {
        "random" => vec![None; p],
        "near_diagonal" => (0..p).map(|mu| (mu < p_star).then_some(mu)).collect(),
        "off_diagonal" => {
            let (g, mu) = parse_pair(o.pair.as_deref())?;
            if g >= p_star || mu >= p {
                return Err(Error::Config(format!("pair ({g},{mu}) outside {p_star} x {p}")));
            }
            let mut a: Vec<Option<usize>> = (0..p).map(|k| (k < p_star).then_some(k)).collect();
            a[mu] = Some(g);
            a
        }
        other => return Err(Error::Config(format!("unknown init `{other}` (random | near_diagonal | off_diagonal)"))),
    };
    let strength = o.external_field.unwrap_or(0.0);
    let external_field = (strength != 0.0).then(|| ExternalField {
        strength,
        assignment: assignment.iter().enumerate().map(|(mu, a)| a.unwrap_or(mu % p_star)).collect(),
    });
    let cfg = SimulationConfig {
        n,
        m,
        gibbs_sweeps: gibbs,
        mc_sweeps: sweeps,
        external_field,
        langevin: langevin_config(LangevinConfig::default(), o.step_size, o.decay, o.friction, o.cd_steps),
        seed,
    };
    cfg.check()?;
    let mut rng = rng_from_seed(seed);
    let teacher = match hyper.teacher_prior {
        TeacherPrior::BinaryArcsine => sample_binary_arcsine(&checked.q, n, &mut rng)?,
        TeacherPrior::Gaussian => sample_gaussian_patterns(&checked.q, n, &mut rng)?,
    };
    let data = generate_teacher_data(&teacher, beta_star, m, gibbs, &mut rng)?;
    let kind = match hyper.student_prior {
        StudentPrior::BinaryUniform => PatternKind::Binary,
        StudentPrior::StandardGaussian => PatternKind::Real,
    };
    let start = if init == "random" {
        random_patterns(p, n, kind, &mut rng)
    } else {
        near_teacher_patterns(&teacher, &assignment, m0, kind, &mut rng)?
    };
    let run = match kind {
        PatternKind::Binary => sim::train_student_binary(&data, &teacher, beta, &start, &cfg, &mut rng),
        PatternKind::Real => sim::train_student_gaussian(&data, &teacher, beta, &start, &cfg, &mut rng),
    };
    let mut h = header(&["epoch", "sweep"]);
    for g in 0..p_star {
        for mu in 0..p {
            h.push(format!("m_{g}_{mu}"));
        }
    }
    h.push(if kind == PatternKind::Binary { "acceptance_rate".into() } else { "step_size".into() });
    h.push("seed".into());
    let mut extra = serde_json::Map::new();
    extra.insert("simulation".into(), json(&cfg));
    extra.insert("samples_m".into(), json(&m));
    let (trace, exit_code) = match run {
        Ok(r) => (r.trace, exit::OK),
        Err(e) if matches!(e, Error::DivergedTrajectory { .. }) => {
            eprintln!("warning: {e}");
            (sim::OverlapTrace::default(), exit::DIVERGED)
        }
        Err(e) => return Err(e),
    };
    let rows = trace
        .records
        .iter()
        .map(|r| {
            let mut row: Vec<Cell> = vec![r.epoch.into(), (r.epoch * n * p).into()];
            for g in 0..p_star {
                for mu in 0..p {
                    row.push(r.m[(g, mu)].into());
                }
            }
            row.push(r.rate.into());
            row.push(Cell::Int(seed as i64));
            row
        })
        .collect();
    if let Some(from) = o.measure_from {
        if let Some(mean) = trace.mean_abs(from) {
            eprintln!("mean |m| from epoch {from}: {}", fmt_matrix(&mean));
        }
    }
    Ok(Output { header: h, rows, master_seed: Some(seed), extra, exit_code, ..Output::default() })
}

fn fmt_matrix(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> =
        (0..m.nrows()).map(|i| m.row(i).iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")).collect();
    rows.join(" | ")
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(|_| Error::Config(format!("`{x}` in `{s}` is not a number"))))
        .collect()
}

fn lottery(o: &LotteryOptions) -> Result<Output> {
    let d = LotteryConfig::default();
    let (beta, beta_star) = temperatures_or(d.beta, o.beta, o.temperature, o.beta_star, o.nishimori)?;
    let cfg = LotteryConfig {
        n: o.n.unwrap_or(d.n),
        p: o.p.unwrap_or(d.p),
        p_star: o.p_star.unwrap_or(d.p_star),
        beta_star,
        beta,
        alphas: match &o.alphas {
            Some(s) => parse_list(s)?,
            None => d.alphas.clone(),
        },
        pretrain_epochs: o.pretrain_epochs.unwrap_or(d.pretrain_epochs),
        epochs: o.epochs.unwrap_or(d.epochs),
        gibbs_sweeps: o.gibbs_sweeps.unwrap_or(d.gibbs_sweeps),
        langevin: langevin_config(d.langevin, o.step_size, o.decay, o.friction, o.cd_steps),
    };
    if cfg.p_star > cfg.p || cfg.alphas.is_empty() {
        return Err(Error::Config("lottery needs p_star <= p and at least one alpha".into()));
    }
    let seed = o.seed.unwrap_or(DEFAULT_SEED);
    let r = sim::run_lottery_experiment(&cfg, &mut rng_from_seed(seed))?;
    let mut h = header(&["epoch", "median_diff", "mad_diff"]);
    for k in 0..r.alphas.len() {
        h.push(format!("m_a_{k}"));
        h.push(format!("m_b_{k}"));
    }
    let rows = (0..r.median_diff.len())
        .map(|t| {
            let mut row: Vec<Cell> = vec![t.into(), r.median_diff[t].into(), r.mad_diff[t].into()];
            for k in 0..r.alphas.len() {
                row.push(r.m_a[k][t].into());
                row.push(r.m_b[k][t].into());
            }
            row
        })
        .collect();
    let mut extra = serde_json::Map::new();
    extra.insert("lottery".into(), json(&cfg));
    Ok(Output { header: h, rows, master_seed: Some(seed), extra, ..Output::default() })
}

fn sweep_base(o: &SweepOptions) -> SolveOptions {
    SolveOptions {
        alpha: o.alpha,
        beta: o.beta,
        beta_star: o.beta_star,
        temperature: o.temperature,
        nishimori: o.nishimori,
        p: o.p,
        p_star: o.p_star,
        c: o.c,
        covariance: o.covariance.clone(),
        wishart_d: o.wishart_d,
        wishart_seed: o.wishart_seed,
        student_prior: o.student_prior.clone(),
        teacher_prior: o.teacher_prior.clone(),
        n_gaussian_samples: o.n_gaussian_samples,
        tolerance: o.tolerance,
        max_iters: o.max_iters,
        dt_conjugate: o.dt_conjugate,
        dt_order: o.dt_order,
        seed: o.seed,
        z_sampling: o.z_sampling.clone(),
        window: o.window,
        init: o.init.clone(),
        m0: o.m0,
        eps: o.eps,
        pair: o.pair.clone(),
        tie: o.tie.clone(),
    }
}

const GRID_AXES: [&str; 7] = ["alpha", "T", "beta", "beta_star", "T_star", "c", "m0"];

/// Applies one grid point on top of the base options.
fn at_point(base: &SolveOptions, point: &[(String, f64)], seed: u64) -> SolveOptions {
    let mut o = base.clone();
    o.seed = Some(seed);
    for (name, v) in point {
        match name.as_str() {
            "alpha" => o.alpha = Some(*v),
            "T" => {
                o.temperature = Some(*v);
                o.beta = None;
            }
            "beta" => {
                o.beta = Some(*v);
                o.temperature = None;
            }
            "beta_star" => o.beta_star = Some(*v),
            "T_star" => o.beta_star = Some(1.0 / v),
            "c" => o.c = Some(*v),
            "m0" => o.m0 = Some(*v),
            _ => unreachable!("axis names are checked before the sweep"),
        }
    }
    o
}

fn sweep(o: &SweepOptions) -> Result<Output> {
    let grid = o.grid.as_deref().ok_or_else(|| Error::Config("sweep needs --grid".into()))?;
    let axes = parse_grid(grid)?;
    if let Some(a) = axes.iter().find(|a| !GRID_AXES.contains(&a.name.as_str())) {
        return Err(Error::Config(format!("unknown grid axis `{}` (expected one of {})", a.name, GRID_AXES.join(", "))));
    }
    let points = grid_points(&axes);
    let master = o.seed.unwrap_or(DEFAULT_SEED);
    let seeds: Vec<u64> = (0..points.len()).map(|i| derive_seed(master, i as u64)).collect();
    let base = sweep_base(o);
    let task = o.task.as_deref().unwrap_or("solve");
    let (header, rows): (Vec<String>, Vec<Vec<Cell>>) = match task {
        "solve" => {
            // Resolve every point up front so option errors abort before any work.
            let specs: Vec<SolveSpec> =
                points.iter().zip(&seeds).map(|(pt, s)| SolveSpec::from_options(&at_point(&base, pt, *s))).collect::<Result<_>>()?;
            let (p_star, p) = (specs[0].hyper.p_star, specs[0].hyper.p);
            let rows = specs.par_iter().map(|s| solve_row(s, &s.run())).collect();
            (solve_header(p_star, p), rows)
        }
        "reduced" => {
            let sys = reduced_system(o.system.as_deref())?;
            let cfg = reduced_config(o.start, o.damping, o.tolerance, o.max_iters)?;
            let resolved: Vec<(f64, f64, f64)> = points
                .iter()
                .zip(&seeds)
                .map(|(pt, s)| {
                    let p = at_point(&base, pt, *s);
                    let (beta, beta_star) = temperatures(p.beta, p.temperature, p.beta_star, p.nishimori)?;
                    check_positive("beta", beta)?;
                    check_positive("beta_star", beta_star)?;
                    Ok((p.alpha.unwrap_or(1.0), beta, beta_star))
                })
                .collect::<Result<_>>()?;
            let nishimori = o.nishimori.unwrap_or(false);
            let rows = resolved.par_iter().map(|(a, b, bs)| reduced_row(sys, nishimori, *a, *b, *bs, &cfg)).collect();
            (header(&REDUCED_COLUMNS), rows)
        }
        other => return Err(Error::Config(format!("unknown sweep task `{other}` (solve | reduced)"))),
    };
    Ok(Output { header, exit_code: grid_exit_code(&rows), rows, master_seed: Some(master), point_seeds: seeds, ..Output::default() })
}

fn validate(o: &ValidateOptions, out: Option<&Path>) -> Result<i32> {
    let level = match o.level.as_deref().unwrap_or("fast") {
        "fast" => Level::Fast,
        "full" => Level::Full,
        other => return Err(Error::Config(format!("unknown level `{other}` (fast | full)"))),
    };
    let mutation = match o.mutate.as_deref() {
        None | Some("none") => Mutation::None,
        Some("flip-d") => Mutation::FlipD,
        Some(other) => return Err(Error::Config(format!("unknown mutation `{other}`"))),
    };
    let report = run_validation_suite(level, o.seed.unwrap_or(DEFAULT_SEED), mutation);
    let text = report.render();
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("validate.txt"), &text)?;
            print!("{text}");
        }
        None => print!("{text}"),
    }
    Ok(if report.passed() { exit::OK } else { exit::VALIDATION_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn temperature_and_beta_conflict() {
        assert!(temperatures(Some(1.0), Some(1.0), None, None).is_err());
        assert_eq!(temperatures(None, Some(0.5), None, Some(true)).unwrap(), (2.0, 2.0));
        assert_eq!(temperatures(None, None, Some(3.0), None).unwrap(), (DEFAULT_BETA, 3.0));
    }

    #[test]
    fn grid_point_overrides() {
        let base = SolveOptions { beta: Some(2.0), ..Default::default() };
        let p = at_point(&base, &[("T".into(), 0.5), ("alpha".into(), 3.0)], 9);
        assert_eq!((p.beta, p.temperature, p.alpha, p.seed), (None, Some(0.5), Some(3.0), Some(9)));
    }

    #[test]
    fn failed_point_row_is_nan_with_status() {
        let spec = SolveSpec::from_options(&SolveOptions { p: Some(1), p_star: Some(1), ..Default::default() }).unwrap();
        let row = solve_row(&spec, &Err(Error::NonFiniteUpdate { iteration: 3 }));
        assert_eq!(row_status(&row), Some("diverged"));
        assert!(matches!(row[7], Cell::Float(x) if x.is_nan()));
        assert_eq!(grid_exit_code(&[row]), exit::DIVERGED);
    }

    #[test]
    fn pair_parsing() {
        assert_eq!(parse_pair(Some("0, 2")).unwrap(), (0, 2));
        assert!(parse_pair(Some("02")).is_err());
    }
}
