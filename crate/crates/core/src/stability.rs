//! Linear stability of the paramagnetic fixed point and the critical load.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{largest_sym_eigenvalue, psd_sqrt};
use crate::model::uniform_covariance;
use crate::sampling::{derive_seed, rng_from_seed, sample_projected_wishart};
use crate::spins::curie_weiss_moments;

#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// Teacher hidden-unit correlations `⟨τ*τ*⟩`.
    pub r: DMatrix<f64>,
    /// `S = QR` (not symmetric in general).
    pub s: DMatrix<f64>,
    pub lambda_max: f64,
    pub alpha_crit: f64,
}

fn alpha_crit(beta_star: f64, beta: f64, lambda_max: f64) -> f64 {
    1.0 / ((beta_star * beta).powi(2) * lambda_max)
}

/// Critical load for a general teacher pattern covariance `Q`.
///
/// The spectrum of `QR` is read off the symmetric form `Q^{1/2} R Q^{1/2}`.
pub fn critical_load(q: &DMatrix<f64>, beta_star: f64, beta: f64) -> Result<StabilityReport> {
    let r = curie_weiss_moments(beta_star, q, q.nrows())?;
    let root = psd_sqrt(q);
    let sym = &root * &r * &root;
    let lambda_max = largest_sym_eigenvalue(&crate::linalg::symmetrize(&sym));
    Ok(StabilityReport { s: q * &r, r, lambda_max, alpha_crit: alpha_crit(beta_star, beta, lambda_max) })
}

/// Largest eigenvalue of `QR` for uniform off-diagonals `c` (in `Q`) and `d`
/// (in `R`).
pub fn uniform_lambda_max(p_star: usize, c: f64, d: f64) -> f64 {
    let k = p_star as f64 - 1.0;
    k * k * c * d + k * (c + d) + 1.0
}

/// Closed-form critical load for uniform correlations.
pub fn critical_load_uniform(c: f64, beta_star: f64, beta: f64, p_star: usize) -> Result<StabilityReport> {
    uniform_with(c, beta_star, beta, p_star, |d| d)
}

/// Same as [`critical_load_uniform`] with a hook applied to `d` before the
/// closed form is evaluated. Used by the validation suite for mutation tests.
pub fn uniform_with(
    c: f64,
    beta_star: f64,
    beta: f64,
    p_star: usize,
    hook: impl Fn(f64) -> f64,
) -> Result<StabilityReport> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::ParameterOutOfRange { name: "c", value: c, constraint: "0 <= c <= 1" });
    }
    if p_star == 0 {
        return Err(Error::ParameterOutOfRange { name: "P*", value: 0.0, constraint: ">= 1" });
    }
    let q = uniform_covariance(p_star, c);
    let r = curie_weiss_moments(beta_star, &q, p_star)?;
    let d = if p_star > 1 { r[(0, 1)] } else { 0.0 };
    if d < 0.0 {
        return Err(Error::NegativeCorrelation { d });
    }
    let lambda_max = uniform_lambda_max(p_star, c, hook(d));
    Ok(StabilityReport { s: &q * &r, r, lambda_max, alpha_crit: alpha_crit(beta_star, beta, lambda_max) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WishartStatistics {
    pub mean_alpha_crit: f64,
    pub alpha_crit_standard_error: f64,
    /// `[mean of 1/λ_max]⁻¹`
    pub harmonic_lambda_max: f64,
    pub n_draws: usize,
}

/// Critical-load statistics over `Q ~ W(c, P*)` draws.
///
/// One master seed is drawn from `rng`; draw `i` uses `derive_seed(master, i)`
/// so the result does not depend on the thread count.
pub fn wishart_critical_statistics<R: Rng + ?Sized>(
    c: f64,
    p_star: usize,
    beta_star: f64,
    beta: f64,
    n_draws: usize,
    rng: &mut R,
) -> Result<WishartStatistics> {
    if n_draws == 0 {
        return Err(Error::ParameterOutOfRange { name: "n_draws", value: 0.0, constraint: ">= 1" });
    }
    let master: u64 = rng.random();
    let draws: Vec<(f64, f64)> = (0..n_draws)
        .into_par_iter()
        .map(|i| {
            let mut r = rng_from_seed(derive_seed(master, i as u64));
            let q = sample_projected_wishart(c, p_star, p_star, &mut r)?;
            let rep = critical_load(&q, beta_star, beta)?;
            Ok((rep.alpha_crit, rep.lambda_max))
        })
        .collect::<Result<_>>()?;
    let n = n_draws as f64;
    let mean = draws.iter().map(|d| d.0).sum::<f64>() / n;
    let se = if n_draws > 1 {
        let var = draws.iter().map(|d| (d.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let inv = draws.iter().map(|d| 1.0 / d.1).sum::<f64>() / n;
    Ok(WishartStatistics { mean_alpha_crit: mean, alpha_crit_standard_error: se, harmonic_lambda_max: 1.0 / inv, n_draws })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::power_iteration;
    use crate::sampling::rng_from_seed;
    use proptest::prelude::*;

    #[test]
    fn uncorrelated_critical_load() {
        let r = critical_load(&DMatrix::identity(3, 3), 1.2, 1.2).unwrap();
        assert!((r.alpha_crit - 1.2f64.powi(-4)).abs() < 1e-12);
        assert!((r.lambda_max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_patterns_uniform() {
        // brute force: R_12 = tanh(c) for P* = 2, β* = 1
        let c = 0.3;
        let q = uniform_covariance(2, c);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, c, c, 1.0])
            * DMatrix::from_row_slice(2, 2, &[1.0, c.tanh(), c.tanh(), 1.0]);
        let lam = s.complex_eigenvalues().iter().map(|z| z.re).fold(f64::MIN, f64::max);
        let r = critical_load(&q, 1.0, 1.0).unwrap();
        assert!((r.lambda_max - lam).abs() < 1e-12);
        assert!((r.lambda_max - 1.67871).abs() < 1e-5);
        assert!((r.alpha_crit - 0.59570).abs() < 1e-5);
    }

    #[test]
    fn strong_coupling_limit() {
        let (p, c) = (3, 0.5);
        let r = critical_load_uniform(c, 20.0, 1.0, p).unwrap();
        let lim = ((p as f64 - 1.0) * c + 1.0) * p as f64;
        assert!((r.lambda_max - lim).abs() < 1e-8);
    }

    #[test]
    fn closed_form_edges() {
        let r = critical_load_uniform(0.0, 1.3, 0.7, 4).unwrap();
        assert_eq!(r.lambda_max, 1.0);
        // weak-coupling regime: d is small so λ ≈ (P*−1)c + 1
        let r = critical_load_uniform(0.2, 0.1, 1.0, 3).unwrap();
        assert!((r.lambda_max - 1.4).abs() < 0.02);
    }

    #[test]
    fn closed_form_matches_eigensolve() {
        let q = uniform_covariance(3, 0.4);
        let dense = critical_load(&q, 1.0, 1.0).unwrap();
        let closed = critical_load_uniform(0.4, 1.0, 1.0, 3).unwrap();
        assert!((dense.lambda_max - closed.lambda_max).abs() < 1e-12);
        let direct = dense.s.complex_eigenvalues().iter().map(|z| z.re).fold(f64::MIN, f64::max);
        assert!((direct - closed.lambda_max).abs() < 1e-12);
    }

    #[test]
    fn closed_form_grid() {
        for p in 1..=5 {
            for k in 0..10 {
                let c = k as f64 / 10.0;
                for bs in [0.5, 1.0, 2.0] {
                    let a = critical_load_uniform(c, bs, 1.0, p).unwrap();
                    let b = critical_load(&uniform_covariance(p, c), bs, 1.0).unwrap();
                    assert!((a.lambda_max - b.lambda_max).abs() < 1e-10, "p={p} c={c} β*={bs}");
                }
            }
        }
    }

    #[test]
    fn flipped_d_is_detectable() {
        let good = critical_load_uniform(0.4, 1.0, 1.0, 3).unwrap();
        let bad = uniform_with(0.4, 1.0, 1.0, 3, |d| -d).unwrap();
        assert!((good.lambda_max - bad.lambda_max).abs() > 1e-3);
    }

    #[test]
    fn wishart_single_draw() {
        let s = wishart_critical_statistics(0.4, 3, 1.0, 1.0, 1, &mut rng_from_seed(5)).unwrap();
        assert_eq!(s.alpha_crit_standard_error, 0.0);
        assert!((s.mean_alpha_crit * s.harmonic_lambda_max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wishart_mean_converges() {
        let s = wishart_critical_statistics(0.4, 3, 1.0, 1.0, 1000, &mut rng_from_seed(11)).unwrap();
        assert!(s.alpha_crit_standard_error < 0.02 * s.mean_alpha_crit);
        let uni = critical_load_uniform(0.4, 1.0, 1.0, 3).unwrap();
        assert!((s.mean_alpha_crit - uni.alpha_crit).abs() > 3.0 * s.alpha_crit_standard_error);
    }

    #[test]
    fn wishart_degenerate_family() {
        // c = 0 and D = P* = 2: each draw is a 2x2 correlation matrix
        let s = wishart_critical_statistics(0.0, 2, 1.0, 1.0, 20, &mut rng_from_seed(3)).unwrap();
        assert!(s.mean_alpha_crit.is_finite() && s.harmonic_lambda_max >= 1.0);
    }

    fn random_psd(p: usize, seed: u64) -> DMatrix<f64> {
        sample_projected_wishart(0.3, p, p + 1, &mut rng_from_seed(seed)).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn symmetric_form_matches_power_iteration(seed in 0u64..10_000, p in 1usize..6) {
            let q = random_psd(p, seed);
            let rep = critical_load(&q, 1.0, 1.1).unwrap();
            let pi = power_iteration(&rep.s, 1e-14, 100_000);
            prop_assert!((pi - rep.lambda_max).abs() < 1e-10);
            let mean_diag = rep.s.diagonal().sum() / p as f64;
            prop_assert!(rep.lambda_max >= mean_diag - 1e-12);
        }
    }
}
