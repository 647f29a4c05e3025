//! Underdamped Langevin sampling of real student patterns with a
//! contrastive-divergence estimate of the partition-function gradient.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{Dataset, PatternKind, PatternMatrix};

use super::teacher::spin;
use super::{measure_overlaps, OverlapTrace, SimulationConfig, TrainingRun};

/// `Σ_a tanh(β h_a)ᵀ σ^a · β/√N` as a `P x N` matrix, with `h = σ ξᵀ/√N`.
fn phase(sigma: &DMatrix<f64>, xi: &DMatrix<f64>, beta: f64) -> DMatrix<f64> {
    let rs = 1.0 / (xi.ncols() as f64).sqrt();
    let t = (sigma * xi.transpose()).map(|h| (beta * rs * h).tanh());
    t.transpose() * sigma * (beta * rs)
}

/// Gradient of the log posterior, with `M ∇ log Z_β(ξ)` replaced by its
/// CD-`k` estimate from chains started at the data.
pub fn log_posterior_gradient<R: Rng + ?Sized>(
    xi: &DMatrix<f64>,
    data: &Dataset,
    beta: f64,
    cd_steps: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let mut grad = -xi.clone();
    if data.is_empty() || beta == 0.0 {
        return grad;
    }
    let sigma = data.samples();
    grad += phase(sigma, xi, beta);
    let rs = beta / (xi.ncols() as f64).sqrt();
    let (m, n, p) = (sigma.nrows(), sigma.ncols(), xi.nrows());
    let mut v = sigma.clone();
    for _ in 0..cd_steps {
        let h = &v * xi.transpose();
        let tau = DMatrix::from_fn(m, p, |a, mu| spin(rs * h[(a, mu)], rng));
        let hv = &tau * xi;
        v = DMatrix::from_fn(m, n, |a, i| spin(rs * hv[(a, i)], rng));
    }
    grad -= phase(&v, xi, beta);
    grad
}

/// Underdamped Langevin training of a real-valued student from `init`.
///
/// `v ← (1 − γε)v + ε∇log p + √(2γε) η`, `ξ ← ξ + εv`, with
/// `ε_t = ε₀ decay^t`. One epoch is one step over all coordinates.
pub fn train_student_gaussian<R: Rng + ?Sized>(
    data: &Dataset,
    teacher: &PatternMatrix,
    beta: f64,
    init: &PatternMatrix,
    cfg: &SimulationConfig,
    rng: &mut R,
) -> Result<TrainingRun> {
    cfg.check()?;
    if init.dim() != data.dim() {
        return Err(Error::DimensionMismatch { what: "pattern length N", expected: data.dim(), found: init.dim() });
    }
    let l = &cfg.langevin;
    let mut xi = init.values().clone();
    let mut vel = DMatrix::zeros(xi.nrows(), xi.ncols());
    let mut trace = OverlapTrace::default();
    trace.push(0, measure_overlaps(init, teacher)?, l.step_size);
    let mut eps = l.step_size;
    for epoch in 1..=cfg.mc_sweeps {
        let grad = log_posterior_gradient(&xi, data, beta, l.cd_steps, rng);
        let noise = (2.0 * l.friction * eps).sqrt();
        let keep = 1.0 - l.friction * eps;
        for (v, g) in vel.iter_mut().zip(grad.iter()) {
            let eta: f64 = rng.sample(StandardNormal);
            *v = keep * *v + eps * g + noise * eta;
        }
        xi += &vel * eps;
        let worst = xi.iter().fold(0.0f64, |a, x| if x.is_finite() { a.max(x.abs()) } else { f64::INFINITY });
        if worst > l.guard {
            return Err(Error::DivergedTrajectory { step: epoch, norm: worst });
        }
        let current = PatternMatrix::real(xi.clone());
        trace.push(epoch, measure_overlaps(&current, teacher)?, eps);
        eps *= l.decay;
    }
    Ok(TrainingRun { trace, patterns: PatternMatrix::new(xi, PatternKind::Real)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Provenance;
    use crate::sampling::rng_from_seed;
    use crate::sim::{random_patterns, LangevinConfig};

    fn empty(n: usize) -> Dataset {
        Dataset::new(DMatrix::zeros(0, n), Provenance { seed: 0, burn_in_sweeps: 0, chains: 0, beta_star: 0.0 }).unwrap()
    }

    #[test]
    fn prior_is_stationary_without_data() {
        let n = 50;
        let mut rng = rng_from_seed(5);
        let teacher = random_patterns(1, n, PatternKind::Real, &mut rng);
        let init = random_patterns(2, n, PatternKind::Real, &mut rng);
        let cfg = SimulationConfig {
            n,
            m: 0,
            mc_sweeps: 4000,
            langevin: LangevinConfig { step_size: 0.05, ..LangevinConfig::default() },
            ..SimulationConfig::default()
        };
        // Collect entries over the second half of a long run.
        let mut xs = Vec::new();
        let mut cur = init;
        for _ in 0..20 {
            let r = train_student_gaussian(&empty(n), &teacher, 0.0, &cur, &SimulationConfig { mc_sweeps: 200, ..cfg.clone() }, &mut rng).unwrap();
            cur = r.patterns;
            xs.extend(cur.values().iter().cloned());
        }
        let k = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / k;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k;
        // samples are correlated across snapshots, so allow a generous band
        assert!(mean.abs() < 0.1, "mean {mean}");
        assert!((var - 1.0).abs() < 0.15, "var {var}");
    }

    #[test]
    fn divergence_is_reported() {
        let n = 10;
        let mut rng = rng_from_seed(1);
        let teacher = random_patterns(1, n, PatternKind::Real, &mut rng);
        let init = random_patterns(1, n, PatternKind::Real, &mut rng);
        let cfg = SimulationConfig {
            n,
            mc_sweeps: 100,
            langevin: LangevinConfig { step_size: 0.1, guard: 0.5, ..LangevinConfig::default() },
            ..SimulationConfig::default()
        };
        let r = train_student_gaussian(&empty(n), &teacher, 0.0, &init, &cfg, &mut rng);
        assert!(matches!(r, Err(Error::DivergedTrajectory { .. })));
    }

    #[test]
    fn positive_phase_matches_direct_sum() {
        let mut rng = rng_from_seed(2);
        let xi = random_patterns(2, 6, PatternKind::Real, &mut rng).into_values();
        let sigma = DMatrix::from_fn(3, 6, |a, i| if (a + i) % 3 == 0 { 1.0 } else { -1.0 });
        let beta = 0.7;
        let g = phase(&sigma, &xi, beta);
        let rs = 1.0 / 6f64.sqrt();
        for mu in 0..2 {
            for i in 0..6 {
                let mut d = 0.0;
                for a in 0..3 {
                    let h: f64 = (0..6).map(|j| sigma[(a, j)] * xi[(mu, j)]).sum::<f64>() * rs;
                    d += beta * rs * (beta * h).tanh() * sigma[(a, i)];
                }
                assert!((g[(mu, i)] - d).abs() < 1e-12);
            }
        }
    }
}
