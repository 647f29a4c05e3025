//! Effective Hamiltonians and their thermal averages.
//!
//! Every `L` ensemble has the form
//! `E(ξ) = ½λ₂² Σ (s − q)_{μν} ξ_μ ξ_ν + λ₁λ₂ Σ m_{γμ} ξ*_γ ξ_μ + λ₂ Σ h_μ ξ_μ`
//! where the random field `h_μ = Σ_ν A_{μν}(q)(z_{μν} + z_{νμ})/2` has
//! covariance `q`. `A` may be imaginary, so fields and averages are complex.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Hyperparameters, OrderParameterState, ENUMERATION_CAP};

/// Standard-normal `p x p` matrix `z`.
pub type GaussianNoise = DMatrix<f64>;

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// `A_{μν}(q) = √(2q_{μν} − δ_{μν} Σ_η q_{μη})` with the principal complex root.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveFieldMatrix {
    pub entries: DMatrix<Complex64>,
}

impl EffectiveFieldMatrix {
    pub fn new(q: &DMatrix<f64>) -> Self {
        let p = q.nrows();
        let entries = DMatrix::from_fn(p, p, |mu, nu| {
            let mut r = 2.0 * q[(mu, nu)];
            if mu == nu {
                r -= q.row(mu).sum();
            }
            Complex64::new(r, 0.0).sqrt()
        });
        EffectiveFieldMatrix { entries }
    }

    /// Radicand `A_{μν}²`.
    pub fn squared(&self) -> DMatrix<Complex64> {
        self.entries.map(|a| a * a)
    }

    /// `h_μ = Σ_ν A_{μν} (z_{μν} + z_{νμ}) / 2`.
    pub fn field(&self, z: &GaussianNoise) -> Vec<Complex64> {
        let p = self.entries.nrows();
        (0..p)
            .map(|mu| (0..p).map(|nu| self.entries[(mu, nu)] * (0.5 * (z[(mu, nu)] + z[(nu, mu)]))).sum())
            .collect()
    }

    pub fn is_real(&self) -> bool {
        self.entries.iter().all(|a| a.im == 0.0)
    }
}

/// Thermal averages of one ±1 ensemble.
#[derive(Debug, Clone)]
pub struct SpinMoments {
    /// `log Σ_ξ exp(E(ξ))`; the real part is `log |Z|`.
    pub log_z: Complex64,
    pub mean: Vec<Complex64>,
    pub second: DMatrix<Complex64>,
}

impl SpinMoments {
    pub fn mean_re(&self) -> DVector<f64> {
        DVector::from_iterator(self.mean.len(), self.mean.iter().map(|c| c.re))
    }
}

fn check_cap(p: usize) -> Result<()> {
    if p > ENUMERATION_CAP {
        Err(Error::EnumerationCapExceeded { size: p, cap: ENUMERATION_CAP })
    } else {
        Ok(())
    }
}

/// Exhaustive ±1 ensemble with fixed quadratic energy `½ Σ J_{μν} ξ_μ ξ_ν`
/// and a per-call linear field.
#[derive(Debug, Clone)]
pub struct SpinEnsemble {
    p: usize,
    /// Row-major `2^p x p` table of spins.
    spins: Vec<f64>,
    quad: Vec<f64>,
}

impl SpinEnsemble {
    pub fn new(coupling: &DMatrix<f64>) -> Result<Self> {
        let p = coupling.nrows();
        check_cap(p)?;
        let n = 1usize << p;
        let mut spins = Vec::with_capacity(n * p);
        let mut quad = Vec::with_capacity(n);
        for b in 0..n {
            let x: Vec<f64> = (0..p).map(|i| if b >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let mut e = 0.0;
            for mu in 0..p {
                for nu in 0..p {
                    e += coupling[(mu, nu)] * x[mu] * x[nu];
                }
            }
            spins.extend_from_slice(&x);
            quad.push(0.5 * e);
        }
        if quad.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFiniteEnergy);
        }
        Ok(SpinEnsemble { p, spins, quad })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_states(&self) -> usize {
        self.quad.len()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.spins[k * self.p..(k + 1) * self.p]
    }

    fn energies(&self, field: &[Complex64]) -> Result<(Vec<Complex64>, f64)> {
        let p = self.p;
        let mut e = Vec::with_capacity(self.quad.len());
        let mut max_re = f64::NEG_INFINITY;
        for (k, q) in self.quad.iter().enumerate() {
            let x = &self.spins[k * p..(k + 1) * p];
            let mut v = Complex64::new(*q, 0.0);
            for mu in 0..p {
                v += field[mu] * x[mu];
            }
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::NonFiniteEnergy);
            }
            max_re = max_re.max(v.re);
            e.push(v);
        }
        Ok((e, max_re))
    }

    pub fn log_partition(&self, field: &[Complex64]) -> Result<Complex64> {
        let (e, shift) = self.energies(field)?;
        let z: Complex64 = e.iter().map(|v| (v - shift).exp()).sum();
        Ok(z.ln() + shift)
    }

    pub fn moments(&self, field: &[Complex64]) -> Result<SpinMoments> {
        if field.iter().all(|h| h.im == 0.0) {
            return self.moments_real(field);
        }
        let p = self.p;
        let (e, shift) = self.energies(field)?;
        let mut z = C0;
        let mut mean = vec![C0; p];
        let mut second = DMatrix::from_element(p, p, C0);
        for (k, v) in e.iter().enumerate() {
            let w = (v - shift).exp();
            let x = &self.spins[k * p..(k + 1) * p];
            z += w;
            for mu in 0..p {
                let wx = w * x[mu];
                mean[mu] += wx;
                for nu in (mu + 1)..p {
                    second[(mu, nu)] += wx * x[nu];
                }
            }
        }
        let inv = z.inv();
        for m in mean.iter_mut() {
            *m *= inv;
        }
        for mu in 0..p {
            second[(mu, mu)] = Complex64::new(1.0, 0.0);
            for nu in (mu + 1)..p {
                let v = second[(mu, nu)] * inv;
                second[(mu, nu)] = v;
                second[(nu, mu)] = v;
            }
        }
        Ok(SpinMoments { log_z: z.ln() + shift, mean, second })
    }

    /// Same as `moments` for a purely real field, in real arithmetic.
    fn moments_real(&self, field: &[Complex64]) -> Result<SpinMoments> {
        let p = self.p;
        let mut e = Vec::with_capacity(self.quad.len());
        let mut shift = f64::NEG_INFINITY;
        for (k, q) in self.quad.iter().enumerate() {
            let x = &self.spins[k * p..(k + 1) * p];
            let v = q + (0..p).map(|mu| field[mu].re * x[mu]).sum::<f64>();
            if !v.is_finite() {
                return Err(Error::NonFiniteEnergy);
            }
            shift = shift.max(v);
            e.push(v);
        }
        let mut z = 0.0;
        let mut mean = vec![0.0; p];
        let mut second = vec![0.0; p * p];
        for (k, v) in e.iter().enumerate() {
            let w = (v - shift).exp();
            let x = &self.spins[k * p..(k + 1) * p];
            z += w;
            for mu in 0..p {
                let wx = w * x[mu];
                mean[mu] += wx;
                for nu in (mu + 1)..p {
                    second[mu * p + nu] += wx * x[nu];
                }
            }
        }
        let inv = 1.0 / z;
        let second = DMatrix::from_fn(p, p, |mu, nu| {
            let v = match mu.cmp(&nu) {
                std::cmp::Ordering::Equal => 1.0,
                std::cmp::Ordering::Less => second[mu * p + nu] * inv,
                std::cmp::Ordering::Greater => second[nu * p + mu] * inv,
            };
            Complex64::new(v, 0.0)
        });
        Ok(SpinMoments {
            log_z: Complex64::new(z.ln() + shift, 0.0),
            mean: mean.into_iter().map(|m| Complex64::new(m * inv, 0.0)).collect(),
            second,
        })
    }

    /// Boltzmann probabilities of each state at zero field.
    pub fn probabilities(&self) -> Vec<f64> {
        let shift = self.quad.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.quad.iter().map(|e| (e - shift).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }

    /// Real `log Σ exp(E)` at zero field.
    pub fn log_partition_free(&self) -> f64 {
        let shift = self.quad.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        shift + self.quad.iter().map(|e| (e - shift).exp()).sum::<f64>().ln()
    }
}

/// Generic `L_{λ₁,λ₂}` ensemble over ±1 patterns.
#[derive(Debug, Clone)]
pub struct LEnsemble {
    pub ensemble: SpinEnsemble,
    pub a: EffectiveFieldMatrix,
    lambda1: f64,
    lambda2: f64,
    m: DMatrix<f64>,
}

impl LEnsemble {
    pub fn new(lambda1: f64, lambda2: f64, m: &DMatrix<f64>, s: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<Self> {
        let coupling = (s - q) * (lambda2 * lambda2);
        Ok(LEnsemble {
            ensemble: SpinEnsemble::new(&coupling)?,
            a: EffectiveFieldMatrix::new(q),
            lambda1,
            lambda2,
            m: m.clone(),
        })
    }

    /// Ensemble seen by the student hidden units given a teacher hidden state.
    pub fn outer(state: &OrderParameterState, beta_star: f64, beta: f64) -> Result<Self> {
        Self::new(beta_star, beta, &state.m, &state.s, &state.q)
    }

    /// Ensemble seen by one column of student patterns given the teacher's.
    pub fn cavity(state: &OrderParameterState) -> Result<Self> {
        Self::new(1.0, 1.0, &state.m_hat, &state.s_hat, &state.q_hat)
    }

    /// Complex field on each spin for a given `ξ*` and `z`.
    pub fn field(&self, xi_star: &[f64], z: &GaussianNoise) -> Vec<Complex64> {
        let mut h = self.a.field(z);
        let l12 = self.lambda1 * self.lambda2;
        for (mu, hm) in h.iter_mut().enumerate() {
            let mut t = 0.0;
            for (gamma, xs) in xi_star.iter().enumerate() {
                t += self.m[(gamma, mu)] * xs;
            }
            *hm = *hm * self.lambda2 + l12 * t;
        }
        h
    }

    pub fn moments(&self, xi_star: &[f64], z: &GaussianNoise) -> Result<SpinMoments> {
        self.ensemble.moments(&self.field(xi_star, z))
    }

    pub fn log_partition(&self, xi_star: &[f64], z: &GaussianNoise) -> Result<Complex64> {
        self.ensemble.log_partition(&self.field(xi_star, z))
    }
}

/// `R_{μν} = ⟨τ*_μ τ*_ν⟩` under `exp(½β*² Σ Q τ*τ*)`.
pub fn curie_weiss_moments(beta_star: f64, q: &DMatrix<f64>, p_star: usize) -> Result<DMatrix<f64>> {
    if q.nrows() != p_star {
        return Err(Error::DimensionMismatch { what: "Q side", expected: p_star, found: q.nrows() });
    }
    let ens = SpinEnsemble::new(&(q * (beta_star * beta_star)))?;
    let mom = ens.moments(&vec![C0; p_star])?;
    Ok(mom.second.map(|c| c.re))
}

/// Teacher hidden-state table and Boltzmann weights under `M*`.
pub fn teacher_hidden_distribution(beta_star: f64, q: &DMatrix<f64>) -> Result<SpinEnsemble> {
    SpinEnsemble::new(&(q * (beta_star * beta_star)))
}

/// `⟨ττᵀ⟩` under `M(τ) = ½β² Σ s ττ`.
pub fn hidden_moments_m(s: &DMatrix<f64>, beta: f64) -> Result<DMatrix<f64>> {
    let ens = SpinEnsemble::new(&(s * (beta * beta)))?;
    let mom = ens.moments(&vec![C0; s.nrows()])?;
    Ok(mom.second.map(|c| c.re))
}

/// `(⟨τ⟩, ⟨ττᵀ⟩)` under `L^O = L_{β*,β}(τ, τ*, z; m, s, q)`.
pub fn hidden_moments_l_o(
    state: &OrderParameterState,
    h: &Hyperparameters,
    tau_star: &[f64],
    z: &GaussianNoise,
) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    let m = LEnsemble::outer(state, h.beta_star, h.beta)?.moments(tau_star, z)?;
    Ok((m.mean, m.second))
}

/// Conjugate order parameters `(m̂, ŝ, q̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conjugates {
    pub m_hat: DMatrix<f64>,
    pub s_hat: DMatrix<f64>,
    pub q_hat: DMatrix<f64>,
}

impl Conjugates {
    pub fn new(m_hat: DMatrix<f64>, mut s_hat: DMatrix<f64>, q_hat: DMatrix<f64>) -> Self {
        s_hat.fill_diagonal(0.0);
        Conjugates { m_hat, s_hat, q_hat: linalg::symmetrize(&q_hat) }
    }

    pub fn zeros(p_star: usize, p: usize) -> Self {
        Conjugates { m_hat: DMatrix::zeros(p_star, p), s_hat: DMatrix::zeros(p, p), q_hat: DMatrix::zeros(p, p) }
    }

    pub fn of(state: &OrderParameterState) -> Self {
        Conjugates { m_hat: state.m_hat.clone(), s_hat: state.s_hat.clone(), q_hat: state.q_hat.clone() }
    }
}

/// `(⟨ξ⟩, ⟨ξξᵀ⟩)` under `L^C = L_{1,1}(ξ, ξ*, z; m̂, ŝ, q̂)` for ±1 patterns.
pub fn pattern_moments_binary(
    conj: &Conjugates,
    xi_star: &[f64],
    z: &GaussianNoise,
) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    let ens = LEnsemble::new(1.0, 1.0, &conj.m_hat, &conj.s_hat, &conj.q_hat)?;
    let m = ens.moments(xi_star, z)?;
    Ok((m.mean, m.second))
}

/// Inverse and log-determinant of the precision `K = I + q̂ − ŝ` of the
/// Gaussian-pattern posterior.
#[derive(Debug, Clone)]
pub struct GaussianPrecision {
    pub k_inv: DMatrix<f64>,
    pub log_det: f64,
}

pub const MAX_PRECISION_CONDITION: f64 = 1e12;

impl GaussianPrecision {
    pub fn new(conj: &Conjugates) -> Result<Self> {
        let p = conj.q_hat.nrows();
        let mut s_hat = conj.s_hat.clone();
        s_hat.fill_diagonal(0.0);
        let k = linalg::symmetrize(&(DMatrix::identity(p, p) + &conj.q_hat - s_hat));
        let (min, max) = linalg::eigen_range(&k);
        if min <= 0.0 {
            return Err(Error::SingularPrecision { condition: f64::INFINITY });
        }
        let condition = max / min;
        if condition > MAX_PRECISION_CONDITION {
            return Err(Error::SingularPrecision { condition });
        }
        let ch = k.cholesky().ok_or(Error::SingularPrecision { condition })?;
        let log_det = 2.0 * ch.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        Ok(GaussianPrecision { k_inv: ch.inverse(), log_det })
    }

    /// Linear coefficient `b = m̂ᵀξ* + h(q̂; z)`.
    pub fn linear_term(conj: &Conjugates, a: &EffectiveFieldMatrix, xi_star: &[f64], z: &GaussianNoise) -> Vec<Complex64> {
        let mut b = a.field(z);
        for (mu, bm) in b.iter_mut().enumerate() {
            for (gamma, xs) in xi_star.iter().enumerate() {
                *bm += conj.m_hat[(gamma, mu)] * xs;
            }
        }
        b
    }

    pub fn mean(&self, b: &[Complex64]) -> Vec<Complex64> {
        let p = b.len();
        (0..p).map(|mu| (0..p).map(|nu| b[nu] * self.k_inv[(mu, nu)]).sum()).collect()
    }

    /// `log ∫ N(ξ; 0, I) exp(L^C) dξ = ½ bᵀK⁻¹b − ½ log det K`.
    pub fn log_partition(&self, b: &[Complex64]) -> Complex64 {
        let mean = self.mean(b);
        let quad: Complex64 = b.iter().zip(&mean).map(|(x, y)| x * y).sum();
        quad * 0.5 - 0.5 * self.log_det
    }
}

/// Posterior mean and covariance of a Gaussian pattern column.
pub fn pattern_moments_gaussian(
    conj: &Conjugates,
    xi_star: &[f64],
    z: &GaussianNoise,
) -> Result<(Vec<Complex64>, DMatrix<f64>)> {
    let prec = GaussianPrecision::new(conj)?;
    let a = EffectiveFieldMatrix::new(&conj.q_hat);
    let b = GaussianPrecision::linear_term(conj, &a, xi_star, z);
    Ok((prec.mean(&b), prec.k_inv.clone()))
}

/// Closed-form `(m, q, s)` for Gaussian student patterns:
/// `m = Q m̂ K⁻¹`, `q = K⁻¹(m̂ᵀQm̂ + q̂)K⁻¹`, `s = K⁻¹ + q`.
pub fn averaged_gaussian_pattern_equations(
    conj: &Conjugates,
    q_teacher: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let prec = GaussianPrecision::new(conj)?;
    let k_inv = &prec.k_inv;
    let m = q_teacher * &conj.m_hat * k_inv;
    let inner = conj.m_hat.transpose() * q_teacher * &conj.m_hat + &conj.q_hat;
    let q = linalg::symmetrize(&(k_inv * inner * k_inv));
    let s = k_inv + &q;
    Ok((m, q, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{rng_from_seed, whitened_gaussian_samples};
    use rand::Rng;

    fn random_matrix(r: usize, c: usize, scale: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(r, c, |_, _| scale * (rng.random::<f64>() * 2.0 - 1.0))
    }

    /// Boltzmann sum written out term by term, without the shared machinery.
    fn brute_force(
        l1: f64,
        l2: f64,
        m: &DMatrix<f64>,
        s: &DMatrix<f64>,
        q: &DMatrix<f64>,
        xs: &[f64],
        z: &DMatrix<f64>,
    ) -> (Vec<Complex64>, DMatrix<Complex64>) {
        let p = s.nrows();
        let a = |mu: usize, nu: usize| {
            let mut r = 2.0 * q[(mu, nu)];
            if mu == nu {
                for eta in 0..p {
                    r -= q[(mu, eta)];
                }
            }
            Complex64::new(r, 0.0).sqrt()
        };
        let mut zsum = C0;
        let mut mean = vec![C0; p];
        let mut sec = DMatrix::from_element(p, p, C0);
        for b in 0..(1 << p) {
            let x: Vec<f64> = (0..p).map(|i| if b >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let mut e = C0;
            for mu in 0..p {
                for nu in 0..p {
                    e += 0.5 * l2 * l2 * (s[(mu, nu)] - q[(mu, nu)]) * x[mu] * x[nu];
                    e += l2 * a(nu, mu) * 0.5 * (z[(nu, mu)] + z[(mu, nu)]) * x[mu];
                }
                for g in 0..xs.len() {
                    e += l1 * l2 * m[(g, mu)] * xs[g] * x[mu];
                }
            }
            let w = e.exp();
            zsum += w;
            for mu in 0..p {
                mean[mu] += w * x[mu];
                for nu in 0..p {
                    sec[(mu, nu)] += w * x[mu] * x[nu];
                }
            }
        }
        (mean.iter().map(|v| v / zsum).collect(), sec.map(|v| v / zsum))
    }

    #[test]
    fn zero_state_gives_uniform_moments() {
        let st = OrderParameterState::paramagnetic(2, 3);
        let z = random_matrix(3, 3, 1.0, 1);
        let (mean, sec) = hidden_moments_l_o(&st, &Hyperparameters::nishimori(1.2, 1.0, 2, 3), &[1.0, -1.0], &z).unwrap();
        assert!(mean.iter().all(|c| *c == C0));
        assert_eq!(sec.map(|c| c.re), DMatrix::identity(3, 3));
        let (mean, sec) = pattern_moments_binary(&Conjugates::zeros(2, 3), &[1.0, 1.0], &z).unwrap();
        assert!(mean.iter().all(|c| *c == C0));
        assert_eq!(sec.map(|c| c.re), DMatrix::identity(3, 3));
    }

    #[test]
    fn single_unit_tanh() {
        let (bs, b, m0, q0, ts, z0) = (1.2, 0.9, 0.4, 0.3, -1.0, 0.7);
        let st = OrderParameterState::new(
            DMatrix::from_element(1, 1, m0),
            DMatrix::from_element(1, 1, q0),
            DMatrix::from_element(1, 1, q0),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let z = DMatrix::from_element(1, 1, z0);
        let h = Hyperparameters { beta_star: bs, beta: b, ..Hyperparameters::nishimori(1.0, 1.0, 1, 1) };
        let (mean, _) = hidden_moments_l_o(&st, &h, &[ts], &z).unwrap();
        let expect = (bs * b * m0 * ts + b * q0.sqrt() * z0).tanh();
        assert!((mean[0].re - expect).abs() < 1e-14);
        assert_eq!(mean[0].im, 0.0);
    }

    #[test]
    fn psb_diagonal_conjugates_factorize() {
        let m_hat = DMatrix::from_diagonal(&DVector::from_vec(vec![0.8, 0.5]));
        let q_hat = DMatrix::from_diagonal(&DVector::from_vec(vec![0.6, 0.3]));
        let conj = Conjugates::new(m_hat.clone(), DMatrix::zeros(2, 2), q_hat.clone());
        let z = random_matrix(2, 2, 1.5, 3);
        let xs = [1.0, -1.0];
        let (mean, _) = pattern_moments_binary(&conj, &xs, &z).unwrap();
        for mu in 0..2 {
            let e = (m_hat[(mu, mu)] * xs[mu] + q_hat[(mu, mu)].sqrt() * z[(mu, mu)]).tanh();
            assert!((mean[mu].re - e).abs() < 1e-13);
        }
    }

    #[test]
    fn matches_brute_force_enumeration() {
        for seed in 0..5 {
            let m = random_matrix(2, 2, 0.5, 10 + seed);
            let s = linalg::symmetrize(&random_matrix(2, 2, 0.5, 20 + seed));
            let q = linalg::symmetrize(&random_matrix(2, 2, 0.5, 30 + seed));
            let z = random_matrix(2, 2, 1.5, 40 + seed);
            let xs = [1.0, -1.0];
            let ens = LEnsemble::new(1.1, 0.8, &m, &s, &q).unwrap();
            let got = ens.moments(&xs, &z).unwrap();
            let (mean, sec) = brute_force(1.1, 0.8, &m, &s, &q, &xs, &z);
            for mu in 0..2 {
                assert!((got.mean[mu] - mean[mu]).norm() < 1e-11);
                for nu in 0..2 {
                    assert!((got.second[(mu, nu)] - sec[(mu, nu)]).norm() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn two_coupled_spins() {
        let w = 0.37;
        let s = DMatrix::from_row_slice(2, 2, &[1.0, w, w, 1.0]);
        let r = hidden_moments_m(&s, 1.3).unwrap();
        assert!((r[(0, 1)] - (1.3f64.powi(2) * w).tanh()).abs() < 1e-14);
        assert_eq!(hidden_moments_m(&s, 0.0).unwrap(), DMatrix::identity(2, 2));
        assert_eq!(hidden_moments_m(&DMatrix::identity(3, 3), 2.0).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn curie_weiss_pair_correlation() {
        let q = crate::model::uniform_covariance(2, 0.3);
        let r = curie_weiss_moments(1.0, &q, 2).unwrap();
        assert!((r[(0, 1)] - 0.291_312_612_451_591).abs() < 1e-12);
        assert_eq!(curie_weiss_moments(1.7, &DMatrix::identity(3, 3), 3).unwrap(), DMatrix::identity(3, 3));
        let strong = curie_weiss_moments(10.0, &crate::model::uniform_covariance(3, 0.5), 3).unwrap();
        assert!(strong[(0, 2)] > 1.0 - 1e-9);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let big = DMatrix::identity(21, 21);
        assert!(matches!(hidden_moments_m(&big, 1.0), Err(Error::EnumerationCapExceeded { .. })));
    }

    #[test]
    fn antithetic_imaginary_parts_cancel() {
        // Every radicand negative: the random field is purely imaginary.
        let q = DMatrix::from_row_slice(2, 2, &[-0.5, -0.1, -0.1, -0.5]);
        let a = EffectiveFieldMatrix::new(&q);
        assert!(a.entries.iter().all(|c| c.re.abs() < 1e-15));
        let m = DMatrix::from_row_slice(1, 2, &[0.3, -0.2]);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
        let ens = LEnsemble::new(1.0, 1.0, &m, &s, &q).unwrap();
        let z = random_matrix(2, 2, 1.0, 7);
        let a = ens.moments(&[1.0], &z).unwrap();
        let b = ens.moments(&[1.0], &(-&z)).unwrap();
        for mu in 0..2 {
            assert!((a.mean[mu] + b.mean[mu]).im.abs() < 1e-14);
            for nu in 0..2 {
                assert!((a.second[(mu, nu)] + b.second[(mu, nu)]).im.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn imaginary_part_vanishes_on_average() {
        let q = DMatrix::from_row_slice(2, 2, &[0.1, 0.3, 0.3, 0.2]);
        let m = DMatrix::from_row_slice(1, 2, &[0.2, 0.1]);
        let ens = LEnsemble::new(1.0, 1.0, &m, &DMatrix::identity(2, 2), &q).unwrap();
        let mut rng = rng_from_seed(9);
        let zs = whitened_gaussian_samples(200_000, 2, &mut rng).unwrap();
        let mut acc = 0.0;
        for z in &zs {
            acc += ens.moments(&[1.0], z).unwrap().mean[0].im;
        }
        assert!((acc / zs.len() as f64).abs() < 5e-3);
    }

    #[test]
    fn gaussian_zero_conjugates() {
        let conj = Conjugates::zeros(1, 2);
        let z = random_matrix(2, 2, 1.0, 2);
        let (mean, cov) = pattern_moments_gaussian(&conj, &[1.0], &z).unwrap();
        assert!(mean.iter().all(|c| c.norm() == 0.0));
        assert_eq!(cov, DMatrix::identity(2, 2));
        let (m, q, s) = averaged_gaussian_pattern_equations(&conj, &DMatrix::identity(1, 1)).unwrap();
        assert_eq!(m, DMatrix::zeros(1, 2));
        assert_eq!(q, DMatrix::zeros(2, 2));
        assert_eq!(s, DMatrix::identity(2, 2));
    }

    #[test]
    fn gaussian_scalar_mean() {
        let (mh, qh, xs, z0) = (0.7, 0.4, -1.0, 0.3);
        let conj = Conjugates::new(DMatrix::from_element(1, 1, mh), DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, qh));
        let (mean, cov) = pattern_moments_gaussian(&conj, &[xs], &DMatrix::from_element(1, 1, z0)).unwrap();
        assert!((mean[0].re - (mh * xs + qh.sqrt() * z0) / (1.0 + qh)).abs() < 1e-14);
        assert!((cov[(0, 0)] - 1.0 / (1.0 + qh)).abs() < 1e-14);
    }

    #[test]
    fn gaussian_diagonal_matches_scalar_equations() {
        let mh = [0.7, 1.3];
        let qh = [0.4, 0.9];
        let conj = Conjugates::new(
            DMatrix::from_diagonal(&DVector::from_row_slice(&mh)),
            DMatrix::zeros(2, 2),
            DMatrix::from_diagonal(&DVector::from_row_slice(&qh)),
        );
        let (m, q, _) = averaged_gaussian_pattern_equations(&conj, &DMatrix::identity(2, 2)).unwrap();
        for i in 0..2 {
            assert!((m[(i, i)] - mh[i] / (1.0 + qh[i])).abs() < 1e-14);
            assert!((q[(i, i)] - (mh[i] * mh[i] + qh[i]) / (1.0 + qh[i]).powi(2)).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_precision_detected() {
        let conj = Conjugates::new(DMatrix::zeros(1, 2), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), DMatrix::zeros(2, 2));
        assert!(matches!(GaussianPrecision::new(&conj), Err(Error::SingularPrecision { .. })));
    }
}
