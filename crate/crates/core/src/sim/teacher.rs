//! Teacher data from block Gibbs sampling of the teacher RBM.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::model::{Dataset, PatternMatrix, Provenance};
use crate::sampling::{derive_seed, rng_from_seed, SimRng};

/// `±1` draw with `P(+1) = 1 / (1 + e^{−2h})`.
#[inline]
pub(crate) fn spin<R: Rng + ?Sized>(h: f64, rng: &mut R) -> f64 {
    let p = 1.0 / (1.0 + (-2.0 * h).exp());
    if rng.random::<f64>() < p {
        1.0
    } else {
        -1.0
    }
}

fn chain(xi: &[f64], p: usize, n: usize, coupling: f64, sweeps: usize, rng: &mut SimRng) -> Vec<f64> {
    let mut sigma: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let mut tau = vec![0.0; p];
    for _ in 0..sweeps {
        for (mu, t) in tau.iter_mut().enumerate() {
            let row = &xi[mu * n..(mu + 1) * n];
            let h: f64 = row.iter().zip(&sigma).map(|(a, b)| a * b).sum();
            *t = spin(coupling * h, rng);
        }
        for (i, s) in sigma.iter_mut().enumerate() {
            let h: f64 = (0..p).map(|mu| tau[mu] * xi[mu * n + i]).sum();
            *s = spin(coupling * h, rng);
        }
    }
    sigma
}

/// `m` visible samples, each the last state of its own block-Gibbs chain of
/// `sweeps` sweeps under `exp((β*/√N) Σ σ_i ξ*_iμ τ_μ)`.
///
/// Chain `a` is seeded with `derive_seed(master, a)` where `master` is drawn
/// from `rng`, so the dataset does not depend on the thread count.
pub fn generate_teacher_data<R: Rng + ?Sized>(
    xi_star: &PatternMatrix,
    beta_star: f64,
    m: usize,
    sweeps: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let (p, n) = (xi_star.n_patterns(), xi_star.dim());
    let master: u64 = rng.random();
    let xi: Vec<f64> = (0..p).flat_map(|mu| xi_star.values().row(mu).iter().cloned().collect::<Vec<_>>()).collect();
    let coupling = beta_star / (n as f64).sqrt();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|a| chain(&xi, p, n, coupling, sweeps.max(1), &mut rng_from_seed(derive_seed(master, a as u64))))
        .collect();
    let samples = DMatrix::from_fn(m, n, |a, i| rows[a][i]);
    Dataset::new(samples, Provenance { seed: master, burn_in_sweeps: sweeps, chains: m, beta_star })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PatternKind;
    use crate::sim::random_patterns;

    #[test]
    fn zero_coupling_gives_uniform_spins() {
        let mut rng = rng_from_seed(1);
        let xi = random_patterns(2, 50, PatternKind::Binary, &mut rng);
        let d = generate_teacher_data(&xi, 0.0, 400, 3, &mut rng).unwrap();
        let mean = d.samples().mean();
        assert!(mean.abs() < 4.0 / (d.samples().len() as f64).sqrt());
    }

    #[test]
    fn seeds_reproduce() {
        let xi = random_patterns(1, 20, PatternKind::Binary, &mut rng_from_seed(4));
        let a = generate_teacher_data(&xi, 1.0, 30, 10, &mut rng_from_seed(7)).unwrap();
        let b = generate_teacher_data(&xi, 1.0, 30, 10, &mut rng_from_seed(7)).unwrap();
        let c = generate_teacher_data(&xi, 1.0, 30, 10, &mut rng_from_seed(8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples(), c.samples());
    }

    #[test]
    fn marginal_matches_enumeration() {
        // N = 10, P* = 1: P(σ) ∝ cosh(β*/√N ξ*·σ), a function of the overlap only.
        let n = 10;
        let beta_star = 2.0;
        let mut rng = rng_from_seed(11);
        let xi = random_patterns(1, n, PatternKind::Binary, &mut rng);
        let samples = 40_000;
        let d = generate_teacher_data(&xi, beta_star, samples, 20, &mut rng).unwrap();
        let c = beta_star / (n as f64).sqrt();
        // Exact distribution of k = #agreeing sites.
        let mut exact = vec![0.0; n + 1];
        for (k, e) in exact.iter_mut().enumerate() {
            let binom = (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64);
            *e = binom * (c * (2.0 * k as f64 - n as f64)).cosh();
        }
        let z: f64 = exact.iter().sum();
        let mut hist = vec![0.0; n + 1];
        for a in 0..samples {
            let k = (0..n).filter(|i| d.samples()[(a, *i)] == xi.values()[(0, *i)]).count();
            hist[k] += 1.0 / samples as f64;
        }
        let tv: f64 = 0.5 * hist.iter().zip(&exact).map(|(h, e)| (h - e / z).abs()).sum::<f64>();
        assert!(tv < 0.02, "tv = {tv}");
        // far from uniform at this coupling
        let uniform_mid = exact[n / 2] / z;
        assert!(uniform_mid < 0.2);
    }
}
