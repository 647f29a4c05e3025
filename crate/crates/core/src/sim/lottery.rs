//! Lottery-ticket experiment: a student initialized with the pruned initial
//! patterns of a wider trained student against a fresh student.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::PatternKind;
use crate::sampling::{derive_seed, rng_from_seed};

use super::{generate_teacher_data, magnitude_prune, random_patterns, train_student_gaussian, LangevinConfig, SimulationConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LotteryConfig {
    pub n: usize,
    /// Width of the over-parameterized student O.
    pub p: usize,
    pub p_star: usize,
    pub beta_star: f64,
    pub beta: f64,
    pub alphas: Vec<f64>,
    /// Langevin steps for student O.
    pub pretrain_epochs: usize,
    /// Langevin steps for students A and B.
    pub epochs: usize,
    pub gibbs_sweeps: usize,
    pub langevin: LangevinConfig,
}

impl Default for LotteryConfig {
    fn default() -> Self {
        LotteryConfig {
            n: 512,
            p: 8,
            p_star: 4,
            beta_star: 4.0,
            beta: 4.0,
            alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            pretrain_epochs: 400,
            epochs: 400,
            gibbs_sweeps: 200,
            langevin: LangevinConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LotteryResult {
    pub alphas: Vec<f64>,
    /// `m_a[k][t]`: magnetization of student A at load `alphas[k]`, epoch `t`.
    pub m_a: Vec<Vec<f64>>,
    pub m_b: Vec<Vec<f64>>,
    /// Median over loads of `m_B − m_A`, per epoch.
    pub median_diff: Vec<f64>,
    /// Mean absolute deviation of `m_B − m_A` around that median.
    pub mad_diff: Vec<f64>,
}

/// Mean over teacher patterns of the largest `|m|` any student reaches.
pub fn best_match_magnetization(m: &DMatrix<f64>) -> f64 {
    let rows = m.nrows();
    if rows == 0 {
        return 0.0;
    }
    (0..rows).map(|g| m.row(g).iter().fold(0.0f64, |a, x| a.max(x.abs()))).sum::<f64>() / rows as f64
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn one_load(cfg: &LotteryConfig, alpha: f64, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rng = rng_from_seed(seed);
    let teacher = random_patterns(cfg.p_star, cfg.n, PatternKind::Real, &mut rng);
    let m = (alpha * cfg.n as f64).round() as usize;
    let data = generate_teacher_data(&teacher, cfg.beta_star, m, cfg.gibbs_sweeps, &mut rng)?;
    let sim = |epochs| SimulationConfig {
        n: cfg.n,
        m,
        gibbs_sweeps: cfg.gibbs_sweeps,
        mc_sweeps: epochs,
        external_field: None,
        langevin: cfg.langevin,
        seed,
    };
    let xi0 = random_patterns(cfg.p, cfg.n, PatternKind::Real, &mut rng);
    let o = train_student_gaussian(&data, &teacher, cfg.beta, &xi0, &sim(cfg.pretrain_epochs), &mut rng)?;
    let b0 = magnitude_prune(&o.patterns, &xi0, cfg.p_star)?;
    let a0 = random_patterns(cfg.p_star, cfg.n, PatternKind::Real, &mut rng);
    let a = train_student_gaussian(&data, &teacher, cfg.beta, &a0, &sim(cfg.epochs), &mut rng)?;
    let b = train_student_gaussian(&data, &teacher, cfg.beta, &b0, &sim(cfg.epochs), &mut rng)?;
    let mags = |t: &super::OverlapTrace| t.records.iter().map(|r| best_match_magnetization(&r.m)).collect();
    Ok((mags(&a.trace), mags(&b.trace)))
}

/// Runs the protocol at every load in `cfg.alphas`:
/// train an over-parameterized student O from `ξ₀`; keep the `P*` rows of
/// `ξ₀` whose trained rows have the largest norms (student B); train B and a
/// freshly initialized student A on the same data, recording magnetizations.
pub fn run_lottery_experiment<R: Rng + ?Sized>(cfg: &LotteryConfig, rng: &mut R) -> Result<LotteryResult> {
    let master: u64 = rng.random();
    let runs: Vec<(Vec<f64>, Vec<f64>)> = cfg
        .alphas
        .par_iter()
        .enumerate()
        .map(|(k, a)| one_load(cfg, *a, derive_seed(master, k as u64)))
        .collect::<Result<_>>()?;
    let epochs = cfg.epochs + 1;
    let mut median_diff = Vec::with_capacity(epochs);
    let mut mad_diff = Vec::with_capacity(epochs);
    for t in 0..epochs {
        let mut d: Vec<f64> = runs.iter().map(|(a, b)| b[t] - a[t]).collect();
        let med = median(&mut d);
        mad_diff.push(d.iter().map(|x| (x - med).abs()).sum::<f64>() / d.len().max(1) as f64);
        median_diff.push(med);
    }
    let (m_a, m_b) = runs.into_iter().unzip();
    Ok(LotteryResult { alphas: cfg.alphas.clone(), m_a, m_b, median_diff, mad_diff })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_match_uses_absolute_values() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -0.5, 0.2, 0.0, 0.3, -0.1]);
        assert!((best_match_magnetization(&m) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn tiny_run_shapes() {
        let cfg = LotteryConfig {
            n: 40,
            p: 4,
            p_star: 2,
            alphas: vec![0.0, 0.5, 1.0],
            pretrain_epochs: 5,
            epochs: 7,
            gibbs_sweeps: 5,
            ..LotteryConfig::default()
        };
        let r = run_lottery_experiment(&cfg, &mut rng_from_seed(1)).unwrap();
        assert_eq!(r.m_a.len(), 3);
        assert_eq!(r.m_b[0].len(), 8);
        assert_eq!(r.median_diff.len(), 8);
        // epoch 0: both untrained, overlaps are O(1/√N)
        assert!(r.median_diff[0].abs() < 1.0);
    }
}
