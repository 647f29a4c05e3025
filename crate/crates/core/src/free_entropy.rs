//! Replica-symmetric free entropy at a given order-parameter state.
//!
//! `f = −Σ m m̂ − ½ Σ_{μ≠ν} s ŝ + ½ Σ q q̂ + E_{ξ*} E_z log Z(L^C)
//!      + α ⟨E_z log Z(L^O)⟩_{M*} − α log Z(M)`
//!
//! Binary partition functions are plain sums over the `2^P` states (no
//! `2^{-P}` prior factor), so the paramagnetic state at `α = 0` gives
//! `P log 2`. Complex partition functions enter through `log |Z|`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Hyperparameters, OrderParameterState, StudentPrior};
use crate::saddle::{NoiseBatch, NoiseSource, SaddleContext, SolverConfig, WhitenedNoise};
use crate::spins::{Conjugates, GaussianPrecision, LEnsemble, SpinEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FreeEntropyTerms {
    /// `−Σ m m̂ − ½ Σ_{μ≠ν} s ŝ + ½ Σ q q̂`
    pub coupling: f64,
    /// `E_{ξ*} E_z log Z(L^C)`
    pub pattern: f64,
    /// `α ⟨E_z log Z(L^O)⟩_{M*}`
    pub hidden: f64,
    /// `−α log Z(M)`
    pub normalization: f64,
}

#[derive(Debug, Clone)]
pub struct FreeEntropy {
    pub value: f64,
    /// Monte Carlo standard error from antithetic pairs; 0 for quadrature
    /// batches and closed forms.
    pub standard_error: f64,
    pub terms: FreeEntropyTerms,
    /// Stochastic part averaged over each antithetic pair `(i, i + n/2)`.
    pub pair_values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FreeEntropyDifference {
    pub first: FreeEntropy,
    pub second: FreeEntropy,
    /// `f(first) − f(second)`
    pub difference: f64,
    pub standard_error: f64,
}

/// Whitened batch used for free-entropy estimates, reproducible from `seed`.
pub fn free_entropy_batch(h: &Hyperparameters, q: &DMatrix<f64>, n_samples: usize, seed: u64) -> Result<NoiseBatch> {
    let cfg = SolverConfig { n_gaussian_samples: n_samples, seed, ..SolverConfig::default() };
    WhitenedNoise::new(&cfg, h, q).batch(0)
}

/// Free entropy with a fresh batch of `n_samples` whitened samples.
pub fn free_entropy<R: Rng + ?Sized>(
    state: &OrderParameterState,
    h: &Hyperparameters,
    q: &DMatrix<f64>,
    n_samples: usize,
    rng: &mut R,
) -> Result<FreeEntropy> {
    let batch = free_entropy_batch(h, q, n_samples, rng.random())?;
    free_entropy_with(state, &SaddleContext::new(h, q)?, &batch)
}

/// Free entropies of two states on common random numbers.
pub fn compare_free_entropy<R: Rng + ?Sized>(
    first: &OrderParameterState,
    second: &OrderParameterState,
    h: &Hyperparameters,
    q: &DMatrix<f64>,
    n_samples: usize,
    rng: &mut R,
) -> Result<FreeEntropyDifference> {
    let ctx = SaddleContext::new(h, q)?;
    let batch = free_entropy_batch(h, q, n_samples, rng.random())?;
    let a = free_entropy_with(first, &ctx, &batch)?;
    let b = free_entropy_with(second, &ctx, &batch)?;
    let diffs: Vec<f64> = a.pair_values.iter().zip(&b.pair_values).map(|(x, y)| x - y).collect();
    Ok(FreeEntropyDifference {
        difference: a.value - b.value,
        standard_error: standard_error(&diffs),
        first: a,
        second: b,
    })
}

fn standard_error(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

fn coupling_term(st: &OrderParameterState) -> f64 {
    let p = st.p();
    let mut off = 0.0;
    for mu in 0..p {
        for nu in 0..p {
            if mu != nu {
                off += st.s[(mu, nu)] * st.s_hat[(mu, nu)];
            }
        }
    }
    -st.m.component_mul(&st.m_hat).sum() - 0.5 * off + 0.5 * st.q.component_mul(&st.q_hat).sum()
}

/// Free entropy on a given batch. Reusing the batch across states gives
/// common random numbers.
pub fn free_entropy_with(state: &OrderParameterState, ctx: &SaddleContext, batch: &NoiseBatch) -> Result<FreeEntropy> {
    let h = &ctx.hyper;
    if state.p_star() != h.p_star || state.p() != h.p {
        return Err(Error::DimensionMismatch { what: "state m", expected: h.p_star, found: state.p_star() });
    }
    let mut st = state.clone();
    st.normalize();
    let alpha = h.alpha;
    let conj = Conjugates::of(&st);

    let coupling = coupling_term(&st);
    let log_z_m = SpinEnsemble::new(&(&st.s * (h.beta * h.beta)))?.log_partition_free();

    let lo = LEnsemble::outer(&st, h.beta_star, h.beta)?;
    let n_teacher = ctx.teacher_hidden.n_states();
    let teacher_states: Vec<Vec<f64>> = (0..n_teacher).map(|k| ctx.teacher_hidden.state(k).to_vec()).collect();

    enum Pattern {
        Gaussian(f64),
        Enumerated(LEnsemble, Vec<Vec<f64>>, Vec<f64>),
        Sampled(LEnsemble),
    }
    let pattern = match h.student_prior {
        StudentPrior::StandardGaussian => {
            let prec = GaussianPrecision::new(&conj)?;
            let second = conj.m_hat.transpose() * &ctx.q_teacher * &conj.m_hat + &conj.q_hat;
            Pattern::Gaussian(0.5 * (&prec.k_inv * second).trace() - 0.5 * prec.log_det)
        }
        StudentPrior::BinaryUniform => {
            let lc = LEnsemble::cavity(&st)?;
            match &ctx.teacher_patterns {
                Some((signs, probs)) => Pattern::Enumerated(lc, signs.clone(), probs.to_vec()),
                None => Pattern::Sampled(lc),
            }
        }
    };

    let n = batch.len();
    // Stochastic part of f per sample: pattern term plus α times hidden term.
    let mut per_sample = Vec::with_capacity(n);
    let mut pattern_mean = 0.0;
    let mut hidden_mean = 0.0;
    for (i, z) in batch.z.iter().enumerate() {
        let mut hid = 0.0;
        for (k, ts) in teacher_states.iter().enumerate() {
            hid += ctx.teacher_hidden_probs[k] * lo.log_partition(ts, z)?.re;
        }
        let pat = match &pattern {
            Pattern::Gaussian(_) => 0.0,
            Pattern::Enumerated(lc, signs, probs) => {
                let mut acc = 0.0;
                for (xs, p) in signs.iter().zip(probs) {
                    if *p > 0.0 {
                        acc += p * lc.log_partition(xs, z)?.re;
                    }
                }
                acc
            }
            Pattern::Sampled(lc) => {
                let xs: &DVector<f64> = batch
                    .xi_star
                    .as_ref()
                    .map(|v| &v[i])
                    .ok_or(Error::Config("batch lacks teacher pattern draws".into()))?;
                lc.log_partition(xs.as_slice(), z)?.re
            }
        };
        let w = batch.weight(i);
        pattern_mean += w * pat;
        hidden_mean += w * alpha * hid;
        per_sample.push(pat + alpha * hid);
    }
    if let Pattern::Gaussian(v) = pattern {
        pattern_mean = v;
    }

    let (pair_values, se) = if batch.weights.is_none() && n % 2 == 0 && n >= 4 {
        let half = n / 2;
        let pairs: Vec<f64> = (0..half).map(|k| 0.5 * (per_sample[k] + per_sample[k + half])).collect();
        let se = standard_error(&pairs);
        (pairs, se)
    } else {
        (Vec::new(), 0.0)
    };

    let terms = FreeEntropyTerms { coupling, pattern: pattern_mean, hidden: hidden_mean, normalization: -alpha * log_z_m };
    Ok(FreeEntropy {
        value: terms.coupling + terms.pattern + terms.hidden + terms.normalization,
        standard_error: se,
        terms,
        pair_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_expect;
    use crate::saddle::{initial_state, solve_from, FixedNoise, InitKind, ZSampling};
    use crate::sampling::rng_from_seed;

    fn log2cosh(x: f64) -> f64 {
        x.abs() + (-2.0 * x.abs()).exp().ln_1p()
    }

    #[test]
    fn paramagnetic_prior_entropy() {
        for p in 1..4 {
            let h = Hyperparameters::nishimori(1.2, 0.0, 2, p);
            let q = DMatrix::identity(2, 2);
            let st = OrderParameterState::paramagnetic(2, p);
            let f = free_entropy(&st, &h, &q, 200, &mut rng_from_seed(1)).unwrap();
            assert!((f.value - p as f64 * std::f64::consts::LN_2).abs() < 1e-12, "{f:?}");
        }
    }

    #[test]
    fn single_unit_matches_written_out_formula() {
        let (bs, b, alpha) = (1.1, 0.9, 1.3);
        let h = Hyperparameters { beta_star: bs, beta: b, ..Hyperparameters::nishimori(b, alpha, 1, 1) };
        let (m, q, mh, qh) = (0.4, 0.3, 0.7, 0.5);
        let one = |x: f64| DMatrix::from_element(1, 1, x);
        let st = OrderParameterState::new(one(m), one(1.0), one(q), one(mh), one(0.0), one(qh)).unwrap();
        let ctx = SaddleContext::new(&h, &DMatrix::identity(1, 1)).unwrap();
        let f = free_entropy_with(&st, &ctx, &NoiseBatch::quadrature_1d()).unwrap();
        let expected = -m * mh + 0.5 * q * qh - 0.5 * qh
            + gauss_expect(|z| log2cosh(mh + qh.sqrt() * z))
            + alpha * (0.5 * b * b * (1.0 - q) + gauss_expect(|z| log2cosh(bs * b * m + b * q.sqrt() * z)))
            - alpha * (0.5 * b * b + std::f64::consts::LN_2);
        assert!((f.value - expected).abs() < 1e-12, "{} vs {expected}", f.value);
    }

    #[test]
    fn stationary_at_quadrature_fixed_point() {
        let h = Hyperparameters::nishimori(1.2, 1.5, 1, 1);
        let q = DMatrix::identity(1, 1);
        let cfg = SolverConfig { tolerance: 1e-13, max_iters: 200_000, z_sampling: ZSampling::Frozen, ..SolverConfig::default() };
        let batch = NoiseBatch::quadrature_1d();
        let start = initial_state(&InitKind::NearDiagonal { m0: 0.5, eps: 0.0 }, 1, 1);
        let r = solve_from(&h, &q, &cfg, start, &mut FixedNoise(batch.clone())).unwrap();
        assert!(r.converged && r.state.m[(0, 0)] > 0.1);
        let ctx = SaddleContext::new(&h, &q).unwrap();
        let step = 1e-4;
        for k in [0usize, 2, 3, 5] {
            let eval = |delta: f64| {
                let mut st = r.state.clone();
                st.matrices_mut()[k][(0, 0)] += delta;
                free_entropy_with(&st, &ctx, &batch).unwrap().value
            };
            let grad = (eval(step) - eval(-step)) / (2.0 * step);
            assert!(grad.abs() < 1e-6, "matrix {k}: {grad}");
        }
        // and away from the fixed point the gradient is not zero
        let mut st = r.state.clone();
        st.m[(0, 0)] += 0.1;
        let g = |d: f64| {
            let mut s = st.clone();
            s.m[(0, 0)] += d;
            free_entropy_with(&s, &ctx, &batch).unwrap().value
        };
        assert!(((g(step) - g(-step)) / (2.0 * step)).abs() > 1e-3);
    }

    #[test]
    fn invariant_under_student_relabeling() {
        let h = Hyperparameters::nishimori(1.2, 1.4, 2, 3);
        let q = DMatrix::identity(2, 2);
        let mut rng = rng_from_seed(9);
        let mut st = OrderParameterState::paramagnetic(2, 3);
        use rand::Rng;
        let mut r = |s: f64| s * (2.0 * rng.random::<f64>() - 1.0);
        st.m = DMatrix::from_fn(2, 3, |_, _| r(0.5));
        st.m_hat = DMatrix::from_fn(2, 3, |_, _| r(0.8));
        let a = DMatrix::from_fn(3, 3, |_, _| r(0.3));
        st.q = &a * a.transpose();
        st.s = &st.q + DMatrix::identity(3, 3) * 0.5;
        let b = DMatrix::from_fn(3, 3, |_, _| r(0.3));
        st.q_hat = &b * b.transpose();
        st.s_hat = DMatrix::from_fn(3, 3, |_, _| r(0.1));
        st.s_hat = crate::linalg::symmetrize(&st.s_hat);
        st.normalize();
        let batch = free_entropy_batch(&h, &q, 400, 17).unwrap();
        let ctx = SaddleContext::new(&h, &q).unwrap();
        let f0 = free_entropy_with(&st, &ctx, &batch).unwrap();
        let perm = [2, 0, 1];
        let f1 = free_entropy_with(&st.permute_students(&perm), &ctx, &batch.permuted(&perm)).unwrap();
        assert!((f0.value - f1.value).abs() < 1e-10, "{} {}", f0.value, f1.value);
        assert!(f0.standard_error > 0.0);
    }

    #[test]
    fn gaussian_student_pattern_term_is_closed_form() {
        let h = Hyperparameters { student_prior: StudentPrior::StandardGaussian, ..Hyperparameters::nishimori(1.0, 0.0, 1, 1) };
        let one = |x: f64| DMatrix::from_element(1, 1, x);
        let (mh, qh) = (0.6, 0.4);
        let st = OrderParameterState::new(one(0.0), one(1.0), one(0.0), one(mh), one(0.0), one(qh)).unwrap();
        let f = free_entropy(&st, &h, &DMatrix::identity(1, 1), 100, &mut rng_from_seed(2)).unwrap();
        // E log ∫ N(ξ) exp(−½q̂ξ² + bξ) with b ~ N(0, m̂² + q̂)
        let k = 1.0 + qh;
        assert!((f.terms.pattern - (0.5 * (mh * mh + qh) / k - 0.5 * k.ln())).abs() < 1e-12);
    }
}
