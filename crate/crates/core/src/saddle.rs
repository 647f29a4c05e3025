//! Damped fixed-point iteration of the replica-symmetric saddle-point
//! equations with Monte Carlo Gaussian integration.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Hyperparameters, OrderParameterState, StudentPrior, TeacherPrior};
use crate::sampling::{self, derive_seed, rng_from_seed, sign_vectors};
pub use crate::sampling::whitened_gaussian_samples;
use crate::spins::{self, Conjugates, GaussianNoise, LEnsemble, SpinEnsemble};

/// How the Gaussian samples evolve across iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZSampling {
    /// New samples every iteration; convergence judged against MC noise.
    #[default]
    Fresh,
    /// One sample set reused throughout; the map is deterministic.
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub dt_conjugate: f64,
    pub dt_order: f64,
    pub n_gaussian_samples: usize,
    pub tolerance: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub z_sampling: ZSampling,
    /// Iterates averaged into the reported state under fresh sampling.
    pub window: usize,
    /// Two student units held exchangeable: each iterate is averaged with
    /// its image under the swap. Keeps a solve on the symmetric subspace
    /// where partial PSB states are fixed points.
    pub tie: Option<(usize, usize)>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt_conjugate: 1.0,
            dt_order: 0.1,
            n_gaussian_samples: 10_000,
            tolerance: 1e-6,
            max_iters: 10_000,
            seed: 0,
            z_sampling: ZSampling::Fresh,
            window: 200,
            tie: None,
        }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<()> {
        for (name, v) in [("dt_conjugate", self.dt_conjugate), ("dt_order", self.dt_order)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::ParameterOutOfRange { name, value: v, constraint: "0 < dt <= 1" });
            }
        }
        if self.n_gaussian_samples < 4 || self.n_gaussian_samples % 2 != 0 {
            return Err(Error::ParameterOutOfRange {
                name: "n_gaussian_samples",
                value: self.n_gaussian_samples as f64,
                constraint: "even and >= 4",
            });
        }
        if self.window < 2 * WINDOW_BATCHES {
            return Err(Error::ParameterOutOfRange { name: "window", value: self.window as f64, constraint: ">= 20" });
        }
        Ok(())
    }
}

/// Starting point of the iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitKind {
    Paramagnetic,
    /// `m_{γμ} = δ_{γμ} m0 + (1 − δ_{γμ}) eps`.
    NearDiagonal { m0: f64, eps: f64 },
    /// Near-diagonal plus `m[pair] = m0` (0-based teacher row, student column).
    OffDiagonal { m0: f64, eps: f64, pair: (usize, usize) },
    /// Entries of `m` uniform in `[-scale, scale]`.
    Random { scale: f64, seed: u64 },
}

/// Builds the initial state. `q` starts at `mᵀm` (symmetric by
/// construction), `s` at the identity and all conjugates at zero.
pub fn initial_state(kind: &InitKind, p_star: usize, p: usize) -> OrderParameterState {
    let near = |m0: f64, eps: f64| DMatrix::from_fn(p_star, p, |g, mu| if g == mu { m0 } else { eps });
    let m = match kind {
        InitKind::Paramagnetic => return OrderParameterState::paramagnetic(p_star, p),
        InitKind::NearDiagonal { m0, eps } => near(*m0, *eps),
        InitKind::OffDiagonal { m0, eps, pair } => {
            let mut m = near(*m0, *eps);
            if pair.0 < p_star && pair.1 < p {
                m[*pair] = *m0;
            }
            m
        }
        InitKind::Random { scale, seed } => {
            let mut rng = rng_from_seed(*seed);
            DMatrix::from_fn(p_star, p, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0))
        }
    };
    let q = linalg::symmetrize(&(m.transpose() * &m));
    let mut st = OrderParameterState::paramagnetic(p_star, p);
    st.m = m;
    st.q = q;
    st
}

/// Gaussian samples (and, when needed, teacher pattern draws) for one
/// iteration.
#[derive(Debug, Clone)]
pub struct NoiseBatch {
    pub z: Vec<GaussianNoise>,
    /// Quadrature weights summing to 1; `None` means equal weights.
    pub weights: Option<Vec<f64>>,
    /// One teacher column per `z`, for real teacher patterns seen by a
    /// binary student.
    pub xi_star: Option<Vec<DVector<f64>>>,
}

impl NoiseBatch {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.z.len() as f64,
        }
    }

    /// Applies a student relabeling `new k ← old perm[k]` to every `z`.
    pub fn permuted(&self, perm: &[usize]) -> NoiseBatch {
        let p = perm.len();
        NoiseBatch {
            z: self.z.iter().map(|z| DMatrix::from_fn(p, p, |k, l| z[(perm[k], perm[l])])).collect(),
            weights: self.weights.clone(),
            xi_star: self.xi_star.clone(),
        }
    }

    /// Gauss–Hermite rule for one student unit (`p = 1`).
    pub fn quadrature_1d() -> NoiseBatch {
        let gh = crate::quadrature::GaussHermite::standard();
        NoiseBatch {
            z: gh.nodes.iter().map(|x| DMatrix::from_element(1, 1, *x)).collect(),
            weights: Some(gh.weights.clone()),
            xi_star: None,
        }
    }
}

pub trait NoiseSource {
    fn batch(&mut self, iteration: usize) -> Result<NoiseBatch>;
}

/// Whitened antithetic samples seeded per iteration (or frozen).
#[derive(Debug, Clone)]
pub struct WhitenedNoise {
    seed: u64,
    n: usize,
    p: usize,
    frozen: bool,
    teacher_q: Option<DMatrix<f64>>,
    cached: Option<NoiseBatch>,
}

impl WhitenedNoise {
    pub fn new(cfg: &SolverConfig, h: &Hyperparameters, q: &DMatrix<f64>) -> Self {
        let needs_xi = h.teacher_prior == TeacherPrior::Gaussian && h.student_prior == StudentPrior::BinaryUniform;
        WhitenedNoise {
            seed: cfg.seed,
            n: cfg.n_gaussian_samples,
            p: h.p,
            frozen: cfg.z_sampling == ZSampling::Frozen,
            teacher_q: needs_xi.then(|| q.clone()),
            cached: None,
        }
    }

    fn draw(&self, iteration: usize) -> Result<NoiseBatch> {
        let mut rng = rng_from_seed(derive_seed(self.seed, iteration as u64));
        let z = whitened_gaussian_samples(self.n, self.p, &mut rng)?;
        let xi_star = match &self.teacher_q {
            None => None,
            Some(q) => {
                let half = self.n / 2;
                let x = sampling::sample_gaussian_patterns(q, half, &mut rng)?.into_values();
                let mut cols: Vec<DVector<f64>> = (0..half).map(|k| x.column(k).into_owned()).collect();
                // Mirrors the antithetic pairing of z.
                let neg: Vec<DVector<f64>> = cols.iter().map(|c| -c).collect();
                cols.extend(neg);
                Some(cols)
            }
        };
        Ok(NoiseBatch { z, weights: None, xi_star })
    }
}

impl NoiseSource for WhitenedNoise {
    fn batch(&mut self, iteration: usize) -> Result<NoiseBatch> {
        if self.frozen {
            if self.cached.is_none() {
                self.cached = Some(self.draw(0)?);
            }
            return Ok(self.cached.clone().unwrap());
        }
        self.draw(iteration)
    }
}

/// Fixed replay of a single batch (e.g. a quadrature rule).
#[derive(Debug, Clone)]
pub struct FixedNoise(pub NoiseBatch);

impl NoiseSource for FixedNoise {
    fn batch(&mut self, _iteration: usize) -> Result<NoiseBatch> {
        Ok(self.0.clone())
    }
}

/// Wraps another source and relabels student indices of every batch.
pub struct PermutedNoise<S> {
    pub inner: S,
    pub perm: Vec<usize>,
}

impl<S: NoiseSource> NoiseSource for PermutedNoise<S> {
    fn batch(&mut self, iteration: usize) -> Result<NoiseBatch> {
        Ok(self.inner.batch(iteration)?.permuted(&self.perm))
    }
}

/// Quantities that stay fixed during a solve.
#[derive(Debug, Clone)]
pub struct SaddleContext {
    pub hyper: Hyperparameters,
    pub q_teacher: DMatrix<f64>,
    pub(crate) teacher_hidden: SpinEnsemble,
    pub(crate) teacher_hidden_probs: Vec<f64>,
    /// Sign vectors and arcsine weights for binary teacher patterns.
    pub(crate) teacher_patterns: Option<(Vec<Vec<f64>>, Arc<Vec<f64>>)>,
}

impl SaddleContext {
    pub fn new(h: &Hyperparameters, q: &DMatrix<f64>) -> Result<Self> {
        if q.nrows() != h.p_star || q.ncols() != h.p_star {
            return Err(Error::DimensionMismatch { what: "Q side", expected: h.p_star, found: q.nrows() });
        }
        let teacher_hidden = spins::teacher_hidden_distribution(h.beta_star, q)?;
        let teacher_hidden_probs = teacher_hidden.probabilities();
        let teacher_patterns = if h.teacher_prior == TeacherPrior::BinaryArcsine
            && h.student_prior == StudentPrior::BinaryUniform
        {
            Some((sign_vectors(h.p_star), sampling::arcsine_sign_probabilities(q)?))
        } else {
            None
        };
        Ok(SaddleContext { hyper: *h, q_teacher: q.clone(), teacher_hidden, teacher_hidden_probs, teacher_patterns })
    }
}

/// Largest `|E_z Im(·)|` seen while forming the averages.
fn max_abs_im(acc: &[&DMatrix<f64>]) -> f64 {
    acc.iter().map(|m| linalg::max_abs(m)).fold(0.0, f64::max)
}

/// Right-hand side of the conjugate equations at `(m, s, q)`.
pub fn conjugate_rhs(state: &OrderParameterState, ctx: &SaddleContext, batch: &NoiseBatch) -> Result<(Conjugates, f64)> {
    let h = &ctx.hyper;
    let (ps, p) = (h.p_star, h.p);
    let lo = LEnsemble::outer(state, h.beta_star, h.beta)?;
    let mut acc_m = DMatrix::zeros(ps, p);
    let mut acc_s = DMatrix::zeros(p, p);
    let mut acc_q = DMatrix::zeros(p, p);
    let mut im_m = DMatrix::zeros(ps, p);
    let mut im_q = DMatrix::zeros(p, p);
    let n_teacher = ctx.teacher_hidden.n_states();
    let mut field = vec![num_complex::Complex64::new(0.0, 0.0); p];
    // Teacher drive m^T τ* per teacher state, shared across z.
    let drive: Vec<Vec<f64>> = (0..n_teacher)
        .map(|k| {
            let ts = ctx.teacher_hidden.state(k);
            (0..p).map(|mu| (0..ps).map(|g| state.m[(g, mu)] * ts[g]).sum::<f64>()).collect()
        })
        .collect();
    for (i, z) in batch.z.iter().enumerate() {
        let wz = batch.weight(i);
        let base = lo.a.field(z);
        for k in 0..n_teacher {
            let pk = ctx.teacher_hidden_probs[k];
            if pk == 0.0 {
                continue;
            }
            let ts = ctx.teacher_hidden.state(k);
            for mu in 0..p {
                field[mu] = base[mu] * h.beta + h.beta_star * h.beta * drive[k][mu];
            }
            let mom = lo.ensemble.moments(&field)?;
            let w = wz * pk;
            for mu in 0..p {
                let t = mom.mean[mu];
                for g in 0..ps {
                    acc_m[(g, mu)] += w * ts[g] * t.re;
                    im_m[(g, mu)] += w * ts[g] * t.im;
                }
                for nu in mu..p {
                    let prod = t * mom.mean[nu];
                    acc_q[(mu, nu)] += w * prod.re;
                    im_q[(mu, nu)] += w * prod.im;
                    if nu > mu {
                        acc_s[(mu, nu)] += w * mom.second[(mu, nu)].re;
                    }
                }
            }
        }
    }
    for mu in 0..p {
        for nu in (mu + 1)..p {
            acc_q[(nu, mu)] = acc_q[(mu, nu)];
            acc_s[(nu, mu)] = acc_s[(mu, nu)];
        }
    }
    let corr_m = spins::hidden_moments_m(&state.s, h.beta)?;
    let b2a = h.beta * h.beta * h.alpha;
    let m_hat = acc_m * (h.beta_star * h.beta * h.alpha);
    let mut s_hat = (acc_s - corr_m) * b2a;
    s_hat.fill_diagonal(0.0);
    let q_hat = acc_q * b2a;
    Ok((Conjugates { m_hat, s_hat, q_hat }, max_abs_im(&[&im_m, &im_q])))
}

/// Right-hand side of the order-parameter equations at given conjugates.
/// Returns `(m, s, q)` and the imaginary leakage.
pub fn order_rhs(
    conj: &Conjugates,
    ctx: &SaddleContext,
    batch: &NoiseBatch,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, f64)> {
    let h = &ctx.hyper;
    if h.student_prior == StudentPrior::StandardGaussian {
        let (m, q, s) = spins::averaged_gaussian_pattern_equations(conj, &ctx.q_teacher)?;
        return Ok((m, s, q, 0.0));
    }
    let (ps, p) = (h.p_star, h.p);
    let lc = LEnsemble::new(1.0, 1.0, &conj.m_hat, &conj.s_hat, &conj.q_hat)?;
    let mut acc_m = DMatrix::zeros(ps, p);
    let mut acc_s = DMatrix::zeros(p, p);
    let mut acc_q = DMatrix::zeros(p, p);
    let mut im_m = DMatrix::zeros(ps, p);
    let mut im_q = DMatrix::zeros(p, p);
    let mut field = vec![num_complex::Complex64::new(0.0, 0.0); p];
    let mut accumulate = |xs: &[f64], base: &[num_complex::Complex64], w: f64| -> Result<()> {
        for mu in 0..p {
            let mut t = 0.0;
            for g in 0..ps {
                t += conj.m_hat[(g, mu)] * xs[g];
            }
            field[mu] = base[mu] + t;
        }
        let mom = lc.ensemble.moments(&field)?;
        for mu in 0..p {
            let x = mom.mean[mu];
            for g in 0..ps {
                acc_m[(g, mu)] += w * xs[g] * x.re;
                im_m[(g, mu)] += w * xs[g] * x.im;
            }
            for nu in mu..p {
                let prod = x * mom.mean[nu];
                acc_q[(mu, nu)] += w * prod.re;
                im_q[(mu, nu)] += w * prod.im;
                if nu > mu {
                    acc_s[(mu, nu)] += w * mom.second[(mu, nu)].re;
                }
            }
        }
        Ok(())
    };
    match (&ctx.teacher_patterns, &batch.xi_star) {
        (Some((states, probs)), _) => {
            for (i, z) in batch.z.iter().enumerate() {
                let wz = batch.weight(i);
                let base = lc.a.field(z);
                for (xs, pr) in states.iter().zip(probs.iter()) {
                    if *pr > 0.0 {
                        accumulate(xs, &base, wz * pr)?;
                    }
                }
            }
        }
        (None, Some(xis)) => {
            for (i, z) in batch.z.iter().enumerate() {
                let base = lc.a.field(z);
                accumulate(xis[i].as_slice(), &base, batch.weight(i))?;
            }
        }
        (None, None) => {
            return Err(Error::Config("real teacher patterns need paired draws in the noise batch".into()));
        }
    }
    let mut s = acc_s;
    for mu in 0..p {
        s[(mu, mu)] = 1.0;
        for nu in (mu + 1)..p {
            acc_q[(nu, mu)] = acc_q[(mu, nu)];
            s[(nu, mu)] = s[(mu, nu)];
        }
    }
    Ok((acc_m, s, acc_q, max_abs_im(&[&im_m, &im_q])))
}

/// Diagnostics of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub imaginary_leakage: f64,
}

/// One damped update: conjugates from the current `(m, s, q)`, then
/// `(m, s, q)` from the new conjugates.
pub fn iterate_step(
    state: &OrderParameterState,
    ctx: &SaddleContext,
    cfg: &SolverConfig,
    batch: &NoiseBatch,
    iteration: usize,
) -> Result<(OrderParameterState, StepInfo)> {
    let (raw_conj, im1) = conjugate_rhs(state, ctx, batch)?;
    let dc = cfg.dt_conjugate;
    let mut next = state.clone();
    next.m_hat = &state.m_hat + (raw_conj.m_hat - &state.m_hat) * dc;
    next.s_hat = &state.s_hat + (raw_conj.s_hat - &state.s_hat) * dc;
    next.q_hat = &state.q_hat + (raw_conj.q_hat - &state.q_hat) * dc;
    next.normalize();
    let (m, s, q, im2) = order_rhs(&Conjugates::of(&next), ctx, batch)?;
    let d = cfg.dt_order;
    next.m = &state.m + (m - &state.m) * d;
    next.s = &state.s + (s - &state.s) * d;
    next.q = &state.q + (q - &state.q) * d;
    next.normalize();
    if !next.is_finite() {
        return Err(Error::NonFiniteUpdate { iteration });
    }
    Ok((next, StepInfo { imaginary_leakage: im1.max(im2) }))
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub state: OrderParameterState,
    pub converged: bool,
    pub iterations: usize,
    /// Max-abs change of all six matrices at each iteration.
    pub residual_trace: Vec<f64>,
    pub imaginary_leakage: f64,
    /// Largest batch-means standard error of the averaged entries (0 when
    /// the final state is a single iterate).
    pub standard_error: f64,
}

impl SolveResult {
    pub fn final_residual(&self) -> f64 {
        self.residual_trace.last().copied().unwrap_or(0.0)
    }
}

fn flatten(st: &OrderParameterState) -> Vec<f64> {
    st.matrices().iter().flat_map(|m| m.iter().cloned()).collect()
}

fn unflatten(template: &OrderParameterState, v: &[f64]) -> OrderParameterState {
    let mut out = template.clone();
    let mut k = 0;
    for m in out.matrices_mut() {
        for x in m.iter_mut() {
            *x = v[k];
            k += 1;
        }
    }
    out.normalize();
    out
}

fn tie_average(st: &OrderParameterState, perm: &[usize]) -> OrderParameterState {
    let image = st.permute_students(perm);
    let mut out = st.clone();
    for (a, b) in out.matrices_mut().into_iter().zip(image.matrices()) {
        *a = (&*a + b) * 0.5;
    }
    out
}

/// Batches per window for the batch-means error estimate.
const WINDOW_BATCHES: usize = 10;

/// Window means of consecutive windows must agree within this many standard
/// errors in every coordinate.
const STEADY_SIGMAS: f64 = 4.0;

/// Per-coordinate window mean and standard error. The error comes from
/// batch means (`WINDOW_BATCHES` batches) of the residuals about a least-squares line, so a
/// steady drift does not masquerade as noise.
fn window_stats(window: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = window.len();
    let dim = window[0].len();
    let nb = WINDOW_BATCHES;
    let bsize = n / nb;
    let tbar = (n as f64 - 1.0) / 2.0;
    let stt: f64 = (0..n).map(|t| (t as f64 - tbar).powi(2)).sum();
    let mut mean = vec![0.0; dim];
    let mut se = vec![0.0; dim];
    for d in 0..dim {
        let mu = window.iter().map(|v| v[d]).sum::<f64>() / n as f64;
        let slope = window.iter().enumerate().map(|(t, v)| (t as f64 - tbar) * (v[d] - mu)).sum::<f64>() / stt;
        let resid = |t: usize| window[t][d] - mu - slope * (t as f64 - tbar);
        let bm: Vec<f64> = (0..nb).map(|b| (b * bsize..(b + 1) * bsize).map(resid).sum::<f64>() / bsize as f64).collect();
        let bmu = bm.iter().sum::<f64>() / nb as f64;
        let var = bm.iter().map(|x| (x - bmu).powi(2)).sum::<f64>() / (nb - 1) as f64;
        mean[d] = mu;
        se[d] = (var / nb as f64).sqrt();
    }
    (mean, se)
}

/// Solves from `init` with whitened samples drawn from `cfg.seed`.
pub fn solve(h: &Hyperparameters, q: &DMatrix<f64>, cfg: &SolverConfig, init: &InitKind) -> Result<SolveResult> {
    let mut source = WhitenedNoise::new(cfg, h, q);
    let start = initial_state(init, h.p_star, h.p);
    solve_from(h, q, cfg, start, &mut source)
}

/// Solves from an explicit state with a caller-supplied noise source.
///
/// A step whose change is at most `cfg.tolerance` ends the run. With fresh
/// sampling the run also ends once the means of two consecutive windows of
/// `cfg.window` iterates agree within `tolerance + 4σ` (σ from batch means);
/// the reported state is then the mean of the last window.
pub fn solve_from(
    h: &Hyperparameters,
    q: &DMatrix<f64>,
    cfg: &SolverConfig,
    start: OrderParameterState,
    source: &mut dyn NoiseSource,
) -> Result<SolveResult> {
    cfg.check()?;
    let bad = h.violations();
    if !bad.is_empty() {
        return Err(Error::Invalid(bad));
    }
    if start.p_star() != h.p_star || start.p() != h.p {
        return Err(Error::DimensionMismatch { what: "initial state m", expected: h.p_star, found: start.p_star() });
    }
    let swap = match cfg.tie {
        Some((a, b)) if a == b || a >= h.p || b >= h.p => {
            return Err(Error::ParameterOutOfRange { name: "tie", value: a.max(b) as f64, constraint: "two distinct student indices < P" });
        }
        Some((a, b)) => {
            let mut perm: Vec<usize> = (0..h.p).collect();
            perm.swap(a, b);
            Some(perm)
        }
        None => None,
    };
    let ctx = SaddleContext::new(h, q)?;
    let mut state = start;
    if let Some(perm) = &swap {
        state = tie_average(&state, perm);
    }
    state.normalize();
    let w = cfg.window;
    let mut history: std::collections::VecDeque<Vec<f64>> = std::collections::VecDeque::with_capacity(2 * w + 1);
    let mut trace = Vec::new();
    let mut leak = 0.0;
    let fresh = cfg.z_sampling == ZSampling::Fresh;
    for it in 0..cfg.max_iters {
        let batch = source.batch(it)?;
        let (mut next, info) = iterate_step(&state, &ctx, cfg, &batch, it)?;
        if let Some(perm) = &swap {
            next = tie_average(&next, perm);
        }
        let residual = next.max_abs_diff(&state);
        trace.push(residual);
        leak = info.imaginary_leakage;
        state = next;
        if residual <= cfg.tolerance {
            return Ok(SolveResult {
                state,
                converged: true,
                iterations: it + 1,
                residual_trace: trace,
                imaginary_leakage: leak,
                standard_error: 0.0,
            });
        }
        if fresh {
            history.push_back(flatten(&state));
            if history.len() > 2 * w {
                history.pop_front();
            }
            if history.len() == 2 * w {
                let v: Vec<Vec<f64>> = history.iter().cloned().collect();
                let (m1, s1) = window_stats(&v[..w]);
                let (m2, s2) = window_stats(&v[w..]);
                let steady = (0..m1.len())
                    .all(|d| (m1[d] - m2[d]).abs() <= cfg.tolerance + STEADY_SIGMAS * (s1[d] * s1[d] + s2[d] * s2[d]).sqrt());
                if steady {
                    let se = s2.iter().cloned().fold(0.0, f64::max);
                    return Ok(SolveResult {
                        state: unflatten(&state, &m2),
                        converged: true,
                        iterations: it + 1,
                        residual_trace: trace,
                        imaginary_leakage: leak,
                        standard_error: se,
                    });
                }
            }
        }
    }
    let (state, se) = if fresh && history.len() >= w {
        let v: Vec<Vec<f64>> = history.iter().skip(history.len() - w).cloned().collect();
        let (m, s) = window_stats(&v);
        (unflatten(&state, &m), s.iter().cloned().fold(0.0, f64::max))
    } else {
        (state, 0.0)
    };
    Ok(SolveResult {
        state,
        converged: false,
        iterations: cfg.max_iters,
        residual_trace: trace,
        imaginary_leakage: leak,
        standard_error: se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::uniform_covariance;

    fn small_cfg() -> SolverConfig {
        SolverConfig { n_gaussian_samples: 2000, ..SolverConfig::default() }
    }

    #[test]
    fn initial_states() {
        let st = initial_state(&InitKind::Paramagnetic, 2, 2);
        assert_eq!(st.s, DMatrix::identity(2, 2));
        assert_eq!(st.m, DMatrix::zeros(2, 2));
        let st = initial_state(&InitKind::NearDiagonal { m0: 0.5, eps: 0.01 }, 2, 3);
        assert_eq!(st.m, DMatrix::from_row_slice(2, 3, &[0.5, 0.01, 0.01, 0.01, 0.5, 0.01]));
        assert_eq!(st.q, st.q.transpose());
        let st = initial_state(&InitKind::OffDiagonal { m0: 0.5, eps: 0.01, pair: (0, 1) }, 2, 3);
        assert_eq!(st.m[(0, 0)], 0.5);
        assert_eq!(st.m[(1, 1)], 0.5);
        assert_eq!(st.m[(0, 1)], 0.5);
    }

    #[test]
    fn paramagnetic_state_is_exact_fixed_point() {
        for alpha in [0.1, 1.0, 5.0] {
            for prior in [StudentPrior::BinaryUniform, StudentPrior::StandardGaussian] {
                let h = Hyperparameters { student_prior: prior, ..Hyperparameters::nishimori(1.2, alpha, 2, 3) };
                let q = uniform_covariance(2, 0.3);
                let ctx = SaddleContext::new(&h, &q).unwrap();
                let cfg = small_cfg();
                let batch = WhitenedNoise::new(&cfg, &h, &q).batch(0).unwrap();
                let st = OrderParameterState::paramagnetic(2, 3);
                let (next, _) = iterate_step(&st, &ctx, &cfg, &batch, 0).unwrap();
                assert_eq!(next, st);
            }
        }
    }

    #[test]
    fn undamped_step_is_raw_rhs() {
        let h = Hyperparameters::nishimori(1.2, 1.5, 2, 2);
        let q = DMatrix::identity(2, 2);
        let ctx = SaddleContext::new(&h, &q).unwrap();
        let cfg = SolverConfig { dt_conjugate: 1.0, dt_order: 1.0, ..small_cfg() };
        let batch = WhitenedNoise::new(&cfg, &h, &q).batch(3).unwrap();
        let st = initial_state(&InitKind::NearDiagonal { m0: 0.4, eps: 0.05 }, 2, 2);
        let (next, _) = iterate_step(&st, &ctx, &cfg, &batch, 0).unwrap();
        let (conj, _) = conjugate_rhs(&st, &ctx, &batch).unwrap();
        assert_eq!(next.m_hat, conj.m_hat);
        let (m, s, qq, _) = order_rhs(&conj, &ctx, &batch).unwrap();
        assert!(linalg::max_abs_diff(&next.m, &m) < 1e-15);
        assert!(linalg::max_abs_diff(&next.s, &s) < 1e-15);
        assert!(linalg::max_abs_diff(&next.q, &qq) < 1e-15);
        assert_eq!(next.q, next.q.transpose());
    }

    #[test]
    fn below_threshold_relaxes_to_paramagnet() {
        let h = Hyperparameters::nishimori(1.2, 0.3, 1, 1);
        let init = InitKind::Random { scale: 0.1, seed: 4 };
        let undamped = SolverConfig { dt_order: 1.0, ..small_cfg() };
        let r = solve(&h, &DMatrix::identity(1, 1), &undamped, &init).unwrap();
        assert!(r.converged);
        assert!(linalg::max_abs(&r.state.m) < 5.0 * undamped.tolerance);
        // With damping the contraction per step is dt (1 - alpha / alpha_crit).
        let cfg = small_cfg();
        let r = solve(&h, &DMatrix::identity(1, 1), &cfg, &init).unwrap();
        let rate = cfg.dt_order * (1.0 - 0.3 * 1.2f64.powi(4));
        assert!(r.converged);
        assert!(linalg::max_abs(&r.state.m) < 5.0 * cfg.tolerance / rate);
    }

    #[test]
    fn quadrature_noise_gives_single_unit_fixed_point() {
        // One unit: Gauss-Hermite integration makes the map deterministic.
        let h = Hyperparameters::nishimori(1.2, 1.0, 1, 1);
        let cfg = SolverConfig { tolerance: 1e-12, max_iters: 100_000, z_sampling: ZSampling::Frozen, ..SolverConfig::default() };
        let mut src = FixedNoise(NoiseBatch::quadrature_1d());
        let start = initial_state(&InitKind::NearDiagonal { m0: 0.5, eps: 0.0 }, 1, 1);
        let r = solve_from(&h, &DMatrix::identity(1, 1), &cfg, start, &mut src).unwrap();
        assert!(r.converged);
        let m = r.state.m[(0, 0)];
        let q = r.state.q[(0, 0)];
        assert!(m > 0.1);
        assert!((m - q).abs() < 1e-9, "{m} {q} {} {}", r.iterations, r.state.m_hat[(0, 0)] - r.state.q_hat[(0, 0)]);
    }

    #[test]
    fn rejects_bad_config() {
        let h = Hyperparameters::nishimori(1.2, 1.0, 1, 1);
        let cfg = SolverConfig { dt_order: 0.0, ..SolverConfig::default() };
        assert!(solve(&h, &DMatrix::identity(1, 1), &cfg, &InitKind::Paramagnetic).is_err());
        let cfg = SolverConfig { n_gaussian_samples: 7, ..SolverConfig::default() };
        assert!(solve(&h, &DMatrix::identity(1, 1), &cfg, &InitKind::Paramagnetic).is_err());
    }

    #[test]
    fn gaussian_teacher_with_binary_student_runs() {
        let h = Hyperparameters { teacher_prior: TeacherPrior::Gaussian, ..Hyperparameters::nishimori(1.2, 1.5, 1, 1) };
        let cfg = SolverConfig { max_iters: 30, ..small_cfg() };
        let r = solve(&h, &DMatrix::identity(1, 1), &cfg, &InitKind::NearDiagonal { m0: 0.5, eps: 0.0 }).unwrap();
        assert!(r.state.m[(0, 0)] > 0.0);
    }

    #[test]
    fn tie_keeps_students_exchangeable() {
        let h = Hyperparameters::nishimori(1.2, 1.5, 2, 3);
        let cfg = SolverConfig { max_iters: 40, tie: Some((0, 2)), ..small_cfg() };
        let r = solve(&h, &DMatrix::identity(2, 2), &cfg, &InitKind::OffDiagonal { m0: 0.5, eps: 0.01, pair: (0, 2) }).unwrap();
        let st = &r.state;
        assert_eq!(*st, st.permute_students(&[2, 1, 0]));
        assert!(st.m[(0, 0)] > 0.1);
    }

    #[test]
    fn tie_must_name_two_students() {
        let h = Hyperparameters::nishimori(1.2, 1.5, 2, 3);
        for tie in [(1, 1), (0, 3)] {
            let cfg = SolverConfig { max_iters: 5, tie: Some(tie), ..small_cfg() };
            assert!(solve(&h, &DMatrix::identity(2, 2), &cfg, &InitKind::Paramagnetic).is_err());
        }
    }
}
