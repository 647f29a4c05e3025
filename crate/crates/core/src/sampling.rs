//! Random pattern generators, correlation-matrix sampling and seed plumbing.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{uniform_covariance, PatternMatrix};

/// RNG used everywhere a seed is threaded through.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of stream `index` under `master`. Independent of how many other
/// streams exist.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(index.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // Filled column by column so the draw order does not depend on storage.
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Factor of a PSD matrix, with rows of zero-variance coordinates exactly 0.
fn degenerate_aware_factor(q: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, f64> {
    let p = q.nrows();
    let live: Vec<usize> = (0..p).filter(|&i| q[(i, i)] != 0.0).collect();
    if live.len() == p {
        return linalg::psd_factor(q);
    }
    linalg::check_psd(q)?;
    let sub = DMatrix::from_fn(live.len(), live.len(), |a, b| q[(live[a], live[b])]);
    let l_sub = linalg::psd_factor(&sub)?;
    let mut l = DMatrix::zeros(p, live.len());
    for (a, &i) in live.iter().enumerate() {
        for b in 0..live.len() {
            l[(i, b)] = l_sub[(a, b)];
        }
    }
    Ok(l)
}

/// Binary patterns with covariance `q`: each column is `sign(x)` with
/// `x ~ N(0, sin(π/2 · q))`.
pub fn sample_binary_arcsine<R: Rng + ?Sized>(q: &DMatrix<f64>, n: usize, rng: &mut R) -> Result<PatternMatrix> {
    let t = q.map(|x| (std::f64::consts::FRAC_PI_2 * x).sin());
    let l = linalg::psd_factor(&t).map_err(|min_eigenvalue| Error::NonPsdTransformedCovariance { min_eigenvalue })?;
    let g = normal_matrix(l.ncols(), n, rng);
    let x = &l * g;
    PatternMatrix::binary(x.map(|v| if v >= 0.0 { 1.0 } else { -1.0 }))
}

/// Real patterns with i.i.d. `N(0, q)` columns.
pub fn sample_gaussian_patterns<R: Rng + ?Sized>(q: &DMatrix<f64>, n: usize, rng: &mut R) -> Result<PatternMatrix> {
    let l = degenerate_aware_factor(q).map_err(|min_eigenvalue| Error::NonPsdCovariance { min_eigenvalue })?;
    let g = normal_matrix(l.ncols(), n, rng);
    Ok(PatternMatrix::real(&l * g))
}

/// Projected Wishart draw with unit diagonal. `d = 0` means `d = p`.
pub fn sample_projected_wishart<R: Rng + ?Sized>(c: f64, p: usize, d: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::ParameterOutOfRange { name: "c", value: c, constraint: "0 <= c < 1" });
    }
    if p == 0 {
        return Err(Error::ParameterOutOfRange { name: "P", value: 0.0, constraint: ">= 1" });
    }
    let d = if d == 0 { p } else { d };
    let l = uniform_covariance(p, c).cholesky().expect("uniform covariance with c < 1 is positive definite").l();
    for _attempt in 0..2 {
        let a = &l * normal_matrix(p, d, rng);
        let b = &a * a.transpose();
        if (0..p).any(|i| b[(i, i)] <= 0.0) {
            continue;
        }
        let mut q = DMatrix::identity(p, p);
        for i in 0..p {
            for j in (i + 1)..p {
                let v = (b[(i, j)] / (b[(i, i)] * b[(j, j)]).sqrt()).clamp(-1.0, 1.0);
                q[(i, j)] = v;
                q[(j, i)] = v;
            }
        }
        return Ok(q);
    }
    Err(Error::DegenerateSample)
}

/// Antithetic, whitened standard-normal `p x p` matrices.
///
/// Half of the samples are negatives of the other half, so every entry has
/// sample mean exactly 0; the `p²` scalar streams are then whitened with the
/// Cholesky factor of their sample covariance so that it is exactly the
/// identity.
pub fn whitened_gaussian_samples<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<Vec<DMatrix<f64>>> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::ParameterOutOfRange { name: "n_gaussian_samples", value: n as f64, constraint: "even and >= 4" });
    }
    let k = p * p;
    for _attempt in 0..2 {
        let half = n / 2;
        // Streams as rows, samples as columns.
        let mut x = DMatrix::zeros(k, n);
        for s in 0..half {
            for r in 0..k {
                let v: f64 = rng.sample(StandardNormal);
                x[(r, s)] = v;
                x[(r, s + half)] = -v;
            }
        }
        let cov = (&x * x.transpose()) / n as f64;
        let Some(ch) = cov.cholesky() else { continue };
        let l = ch.l();
        if (0..k).any(|i| l[(i, i)] <= 1e-12 * l[(0, 0)].abs()) {
            continue;
        }
        let w = match l.solve_lower_triangular(&x) {
            Some(w) => w,
            None => continue,
        };
        let out = (0..n)
            .map(|s| DMatrix::from_fn(p, p, |i, j| w[(i * p + j, s)]))
            .collect();
        return Ok(out);
    }
    Err(Error::SingularSampleCovariance)
}

/// All `2^p` sign vectors in a fixed order: bit `i` of the index set means
/// `-1` at position `i`.
pub fn sign_vectors(p: usize) -> Vec<Vec<f64>> {
    (0..1usize << p)
        .map(|b| (0..p).map(|i| if b >> i & 1 == 1 { -1.0 } else { 1.0 }).collect())
        .collect()
}

const ORTHANT_MC_SAMPLES: usize = 1_000_000;

type OrthantCache = Mutex<HashMap<Vec<u64>, Arc<Vec<f64>>>>;

fn orthant_cache() -> &'static OrthantCache {
    static CACHE: OnceLock<OrthantCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Probabilities of each sign vector of [`sign_vectors`] under the arcsine
/// law with covariance `q`.
///
/// Up to three units the law is determined by its pair moments, so
/// `p(ξ) = 2^{-P}(1 + Σ_{i<j} Q_ij ξ_i ξ_j)`. Beyond that, orthant masses are
/// estimated by Monte Carlo once per matrix and cached.
pub fn arcsine_sign_probabilities(q: &DMatrix<f64>) -> Result<Arc<Vec<f64>>> {
    let p = q.nrows();
    if p > crate::model::ENUMERATION_CAP {
        return Err(Error::EnumerationCapExceeded { size: p, cap: crate::model::ENUMERATION_CAP });
    }
    let states = sign_vectors(p);
    let off_diag_zero = (0..p).all(|i| (0..p).all(|j| i == j || q[(i, j)] == 0.0));
    if p <= 3 || off_diag_zero {
        let norm = 0.5f64.powi(p as i32);
        let probs = states
            .iter()
            .map(|x| {
                let mut s = 1.0;
                for i in 0..p {
                    for j in (i + 1)..p {
                        s += q[(i, j)] * x[i] * x[j];
                    }
                }
                (norm * s).max(0.0)
            })
            .collect();
        return Ok(Arc::new(probs));
    }
    let key: Vec<u64> = q.iter().map(|x| x.to_bits()).collect();
    if let Some(hit) = orthant_cache().lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    let seed = key.iter().fold(0x5EED_u64, |acc, b| splitmix64(acc ^ b));
    let mut rng = rng_from_seed(seed);
    let t = q.map(|x| (std::f64::consts::FRAC_PI_2 * x).sin());
    let l = linalg::psd_factor(&t).map_err(|min_eigenvalue| Error::NonPsdTransformedCovariance { min_eigenvalue })?;
    let mut counts = vec![0u64; states.len()];
    let mut g = vec![0.0; l.ncols()];
    // Antithetic pairs: x and -x land in mirrored orthants.
    for _ in 0..ORTHANT_MC_SAMPLES / 2 {
        for v in g.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut idx = 0usize;
        for i in 0..p {
            let x: f64 = (0..l.ncols()).map(|k| l[(i, k)] * g[k]).sum();
            if x < 0.0 {
                idx |= 1 << i;
            }
        }
        counts[idx] += 1;
        counts[idx ^ ((1 << p) - 1)] += 1;
    }
    let total = (ORTHANT_MC_SAMPLES / 2 * 2) as f64;
    let probs = Arc::new(counts.iter().map(|c| *c as f64 / total).collect::<Vec<_>>());
    orthant_cache().lock().unwrap().insert(key, probs.clone());
    Ok(probs)
}

/// Empirical covariance `(1/N) X Xᵀ` of a pattern matrix.
pub fn empirical_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x * x.transpose()) / x.ncols() as f64
}
