//! Single-site Metropolis sampling of binary student patterns.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Dataset, PatternKind, PatternMatrix, ENUMERATION_CAP};
use crate::sampling::sign_vectors;

use super::{measure_overlaps, ExternalField, OverlapTrace, SimulationConfig, TrainingRun};

/// `log cosh x` without overflow.
#[inline]
pub(crate) fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = v.clone().fold(f64::NEG_INFINITY, f64::max);
    max + v.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn check_p(p: usize) -> Result<()> {
    if p > ENUMERATION_CAP {
        Err(Error::EnumerationCapExceeded { size: p, cap: ENUMERATION_CAP })
    } else {
        Ok(())
    }
}

/// `log Z̃(ξ)`, `Z̃ = 2^{−P} Σ_τ exp((β²/2) τᵀ G τ)` with `G = ξξᵀ/N`.
fn log_z_tilde(gram: &DMatrix<f64>, beta: f64) -> f64 {
    let p = gram.nrows();
    let b2 = 0.5 * beta * beta;
    let e = sign_vectors(p).into_iter().map(move |t| {
        let mut s = 0.0;
        for mu in 0..p {
            for nu in 0..p {
                s += gram[(mu, nu)] * t[mu] * t[nu];
            }
        }
        b2 * s
    });
    let v: Vec<f64> = e.collect();
    log_sum_exp(v.iter().cloned()) - p as f64 * std::f64::consts::LN_2
}

fn log_prior(xi: &PatternMatrix) -> f64 {
    match xi.kind() {
        PatternKind::Binary => -(xi.values().len() as f64) * std::f64::consts::LN_2,
        PatternKind::Real => -0.5 * xi.values().norm_squared(),
    }
}

/// Unnormalized log posterior of student patterns:
/// `Σ_a Σ_μ log cosh(β ξ^μ·σ^a/√N) − M log Z̃(ξ) + log P(ξ)`.
pub fn posterior_log_weight(xi: &PatternMatrix, data: &Dataset, beta: f64) -> Result<f64> {
    check_p(xi.n_patterns())?;
    if xi.dim() != data.dim() {
        return Err(Error::DimensionMismatch { what: "pattern length N", expected: data.dim(), found: xi.dim() });
    }
    let n = xi.dim() as f64;
    let fields = data.samples() * xi.values().transpose() / n.sqrt();
    let likelihood: f64 = fields.iter().map(|h| log_cosh(beta * h)).sum();
    let gram = xi.values() * xi.values().transpose() / n;
    Ok(likelihood - data.len() as f64 * log_z_tilde(&gram, beta) + log_prior(xi))
}

/// Metropolis state with cached fields, Gram matrix and `τ` energies.
#[derive(Debug, Clone)]
pub struct BinaryPosterior {
    n: usize,
    p: usize,
    m: usize,
    beta: f64,
    /// Row-major `M x N`.
    sigma: Vec<f64>,
    /// Row-major `P x N`.
    xi: Vec<f64>,
    /// Row-major `M x P`: `ξ^μ·σ^a/√N`.
    fields: Vec<f64>,
    gram: DMatrix<f64>,
    taus: Vec<Vec<f64>>,
    /// `(β²/2) τᵀGτ` per `τ`.
    energies: Vec<f64>,
    bias: Option<(f64, Vec<f64>)>,
    scratch: Vec<f64>,
}

impl BinaryPosterior {
    /// `external`: bias strength and target teacher pattern per student.
    pub fn new(init: &PatternMatrix, data: &Dataset, beta: f64, external: Option<(&ExternalField, &PatternMatrix)>) -> Result<Self> {
        if init.kind() != PatternKind::Binary {
            return Err(Error::Config("Metropolis student needs binary initial patterns".into()));
        }
        check_p(init.n_patterns())?;
        let (p, n, m) = (init.n_patterns(), init.dim(), data.len());
        if data.dim() != n {
            return Err(Error::DimensionMismatch { what: "pattern length N", expected: data.dim(), found: n });
        }
        let sigma: Vec<f64> = (0..m).flat_map(|a| data.samples().row(a).iter().cloned().collect::<Vec<_>>()).collect();
        let xi: Vec<f64> = (0..p).flat_map(|mu| init.values().row(mu).iter().cloned().collect::<Vec<_>>()).collect();
        let bias = match external {
            None => None,
            Some((f, teacher)) => {
                if f.assignment.len() != p || teacher.dim() != n {
                    return Err(Error::DimensionMismatch { what: "external field assignment", expected: p, found: f.assignment.len() });
                }
                let mut target = vec![0.0; p * n];
                for (mu, g) in f.assignment.iter().enumerate() {
                    if *g >= teacher.n_patterns() {
                        return Err(Error::ParameterOutOfRange { name: "assignment", value: *g as f64, constraint: "< P*" });
                    }
                    for i in 0..n {
                        target[mu * n + i] = teacher.values()[(*g, i)];
                    }
                }
                Some((f.strength, target))
            }
        };
        let mut st = BinaryPosterior {
            n,
            p,
            m,
            beta,
            sigma,
            xi,
            fields: vec![0.0; m * p],
            gram: DMatrix::zeros(p, p),
            taus: sign_vectors(p),
            energies: Vec::new(),
            bias,
            scratch: Vec::new(),
        };
        st.recompute();
        Ok(st)
    }

    fn recompute(&mut self) {
        let (n, p) = (self.n, self.p);
        let rs = 1.0 / (n as f64).sqrt();
        for a in 0..self.m {
            for mu in 0..p {
                let s: f64 = (0..n).map(|i| self.sigma[a * n + i] * self.xi[mu * n + i]).sum();
                self.fields[a * p + mu] = s * rs;
            }
        }
        for mu in 0..p {
            for nu in 0..p {
                self.gram[(mu, nu)] = (0..n).map(|i| self.xi[mu * n + i] * self.xi[nu * n + i]).sum::<f64>() / n as f64;
            }
        }
        let b2 = 0.5 * self.beta * self.beta;
        self.energies = self
            .taus
            .iter()
            .map(|t| {
                let mut s = 0.0;
                for mu in 0..p {
                    for nu in 0..p {
                        s += self.gram[(mu, nu)] * t[mu] * t[nu];
                    }
                }
                b2 * s
            })
            .collect();
    }

    /// Largest difference between the cached and freshly computed fields,
    /// Gram entries and `τ` energies.
    pub fn cache_error(&self) -> f64 {
        let mut fresh = self.clone();
        fresh.recompute();
        let f = self.fields.iter().zip(&fresh.fields).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let g = (&self.gram - &fresh.gram).abs().max();
        let e = self.energies.iter().zip(&fresh.energies).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        f.max(g).max(e)
    }

    pub fn patterns(&self) -> PatternMatrix {
        PatternMatrix::binary(DMatrix::from_row_slice(self.p, self.n, &self.xi)).expect("entries stay ±1")
    }

    /// Log weight of the current state including the external bias.
    pub fn log_weight(&self) -> f64 {
        let lik: f64 = self.fields.iter().map(|h| log_cosh(self.beta * h)).sum();
        let lz = log_sum_exp(self.energies.iter().cloned()) - self.p as f64 * std::f64::consts::LN_2;
        let bias = match &self.bias {
            Some((l, t)) => l * self.xi.iter().zip(t).map(|(a, b)| a * b).sum::<f64>(),
            None => 0.0,
        };
        lik - self.m as f64 * lz - (self.xi.len() as f64) * std::f64::consts::LN_2 + bias
    }

    /// Change of the log weight if `ξ_iμ` were flipped. Leaves the new
    /// `τ` energies in the scratch buffer.
    fn delta(&mut self, mu: usize, i: usize) -> f64 {
        let (n, p) = (self.n, self.p);
        let x = self.xi[mu * n + i];
        let d = -2.0 * x;
        let step = d / (n as f64).sqrt();
        let mut out = 0.0;
        for a in 0..self.m {
            let h = self.fields[a * p + mu];
            let h2 = h + step * self.sigma[a * n + i];
            out += log_cosh(self.beta * h2) - log_cosh(self.beta * h);
        }
        if p > 1 && self.m > 0 {
            let b2 = self.beta * self.beta;
            self.scratch.clear();
            for (t, e) in self.taus.iter().zip(&self.energies) {
                let mut s = 0.0;
                for nu in 0..p {
                    if nu != mu {
                        s += t[nu] * self.xi[nu * n + i];
                    }
                }
                self.scratch.push(e + b2 * t[mu] * s * d / n as f64);
            }
            let old = log_sum_exp(self.energies.iter().cloned());
            let new = log_sum_exp(self.scratch.iter().cloned());
            out -= self.m as f64 * (new - old);
        }
        if let Some((l, t)) = &self.bias {
            out += l * d * t[mu * n + i];
        }
        out
    }

    fn flip(&mut self, mu: usize, i: usize) {
        let (n, p) = (self.n, self.p);
        let d = -2.0 * self.xi[mu * n + i];
        let step = d / (n as f64).sqrt();
        for a in 0..self.m {
            self.fields[a * p + mu] += step * self.sigma[a * n + i];
        }
        for nu in 0..p {
            if nu != mu {
                let g = d * self.xi[nu * n + i] / n as f64;
                self.gram[(mu, nu)] += g;
                self.gram[(nu, mu)] += g;
            }
        }
        if p > 1 && self.m > 0 {
            std::mem::swap(&mut self.energies, &mut self.scratch);
        }
        self.xi[mu * n + i] = -self.xi[mu * n + i];
    }

    /// One random-site proposal. Returns whether it was accepted.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let mu = rng.random_range(0..self.p);
        let i = rng.random_range(0..self.n);
        let dl = self.delta(mu, i);
        if dl >= 0.0 || rng.random::<f64>() < dl.exp() {
            self.flip(mu, i);
            true
        } else {
            false
        }
    }

    /// `N·P` proposals. Returns the acceptance rate.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let total = self.n * self.p;
        let acc = (0..total).filter(|_| self.step(rng)).count();
        acc as f64 / total as f64
    }
}

/// Metropolis training of a binary student from `init`, recording overlaps
/// with `teacher` after every sweep.
pub fn train_student_binary<R: Rng + ?Sized>(
    data: &Dataset,
    teacher: &PatternMatrix,
    beta: f64,
    init: &PatternMatrix,
    cfg: &SimulationConfig,
    rng: &mut R,
) -> Result<TrainingRun> {
    let external = cfg.external_field.as_ref().map(|f| (f, teacher));
    let mut chain = BinaryPosterior::new(init, data, beta, external)?;
    let mut trace = OverlapTrace::default();
    trace.push(0, measure_overlaps(&chain.patterns(), teacher)?, 0.0);
    for epoch in 1..=cfg.mc_sweeps {
        let rate = chain.sweep(rng);
        trace.push(epoch, measure_overlaps(&chain.patterns(), teacher)?, rate);
    }
    Ok(TrainingRun { trace, patterns: chain.patterns() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Provenance;
    use crate::sampling::rng_from_seed;
    use crate::sim::{random_patterns, teacher::spin};

    fn dataset(m: usize, n: usize, seed: u64) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let s = DMatrix::from_fn(m, n, |_, _| spin(0.0, &mut rng));
        Dataset::new(s, Provenance { seed, burn_in_sweeps: 0, chains: m, beta_star: 0.0 }).unwrap()
    }

    #[test]
    fn zero_beta_leaves_prior() {
        let d = dataset(5, 12, 1);
        let xi = random_patterns(2, 12, PatternKind::Binary, &mut rng_from_seed(2));
        let w = posterior_log_weight(&xi, &d, 0.0).unwrap();
        assert!((w + 24.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn single_pattern_normalizer() {
        let g = DMatrix::from_element(1, 1, 0.8);
        assert!((log_z_tilde(&g, 1.5) - 0.5 * 1.5 * 1.5 * 0.8).abs() < 1e-14);
    }

    #[test]
    fn doubling_data_doubles_data_terms() {
        let d = dataset(6, 10, 3);
        let dd = d.concat(&d).unwrap();
        let xi = random_patterns(3, 10, PatternKind::Binary, &mut rng_from_seed(4));
        let prior = -30.0 * std::f64::consts::LN_2;
        let a = posterior_log_weight(&xi, &d, 1.1).unwrap() - prior;
        let b = posterior_log_weight(&xi, &dd, 1.1).unwrap() - prior;
        assert!((b - 2.0 * a).abs() < 1e-10);
    }

    #[test]
    fn cached_weight_matches_direct() {
        let d = dataset(7, 16, 5);
        let xi = random_patterns(3, 16, PatternKind::Binary, &mut rng_from_seed(6));
        let mut st = BinaryPosterior::new(&xi, &d, 1.3, None).unwrap();
        let mut rng = rng_from_seed(7);
        for _ in 0..50 {
            let before = st.log_weight();
            let (mu, i) = (rng.random_range(0..3), rng.random_range(0..16));
            let dl = st.delta(mu, i);
            st.flip(mu, i);
            assert!((st.log_weight() - before - dl).abs() < 1e-9);
            let direct = posterior_log_weight(&st.patterns(), &d, 1.3).unwrap();
            assert!((st.log_weight() - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn caches_survive_many_flips() {
        let d = dataset(20, 64, 8);
        let xi = random_patterns(3, 64, PatternKind::Binary, &mut rng_from_seed(9));
        let mut st = BinaryPosterior::new(&xi, &d, 0.3, None).unwrap();
        let mut rng = rng_from_seed(10);
        let mut accepted = 0;
        while accepted < 100_000 {
            if st.step(&mut rng) {
                accepted += 1;
            }
        }
        assert!(st.cache_error() < 1e-9, "{}", st.cache_error());
    }

    #[test]
    fn external_field_shifts_weight() {
        let d = dataset(4, 10, 11);
        let mut rng = rng_from_seed(12);
        let t = random_patterns(1, 10, PatternKind::Binary, &mut rng);
        let f = ExternalField { strength: 0.05, assignment: vec![0] };
        let a = BinaryPosterior::new(&t, &d, 1.0, None).unwrap();
        let b = BinaryPosterior::new(&t, &d, 1.0, Some((&f, &t))).unwrap();
        assert!((b.log_weight() - a.log_weight() - 0.05 * 10.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_distribution_small_instance() {
        // N = 8, P = 1, M = 4: enumerate all 256 patterns.
        let (n, m, beta) = (8, 4, 1.5);
        let mut rng = rng_from_seed(13);
        let teacher = random_patterns(1, n, PatternKind::Binary, &mut rng);
        let d = crate::sim::generate_teacher_data(&teacher, beta, m, 20, &mut rng).unwrap();
        let states: Vec<PatternMatrix> = (0..256u32)
            .map(|b| {
                let v = DMatrix::from_fn(1, n, |_, i| if b >> i & 1 == 1 { -1.0 } else { 1.0 });
                PatternMatrix::binary(v).unwrap()
            })
            .collect();
        let lw: Vec<f64> = states.iter().map(|s| posterior_log_weight(s, &d, beta).unwrap()).collect();
        let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = lw.iter().map(|x| (x - max).exp()).sum();
        let exact: Vec<f64> = lw.iter().map(|x| (x - max).exp() / z).collect();
        let mut st = BinaryPosterior::new(&states[0], &d, beta, None).unwrap();
        let mut hist = vec![0.0; 256];
        let sweeps = 200_000;
        for _ in 0..sweeps {
            st.sweep(&mut rng);
            let code = (0..n).fold(0usize, |acc, i| acc | (((st.xi[i] < 0.0) as usize) << i));
            hist[code] += 1.0 / sweeps as f64;
        }
        let tv = 0.5 * hist.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>();
        assert!(tv < 0.03, "tv = {tv}");
    }
}
