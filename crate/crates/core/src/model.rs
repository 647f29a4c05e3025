//! Domain types shared by the solvers and the simulator.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::linalg;

/// Largest number of binary units any exhaustive sum is allowed to range over.
pub const ENUMERATION_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StudentPrior {
    #[default]
    BinaryUniform,
    StandardGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TeacherPrior {
    #[default]
    BinaryArcsine,
    Gaussian,
}

/// Knobs of one teacher-student experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Teacher inverse temperature.
    pub beta_star: f64,
    /// Student (inference) inverse temperature.
    pub beta: f64,
    /// Data load M/N.
    pub alpha: f64,
    pub p_star: usize,
    pub p: usize,
    pub student_prior: StudentPrior,
    pub teacher_prior: TeacherPrior,
}

impl Hyperparameters {
    /// Binary student and teacher with `beta = beta_star`.
    pub fn nishimori(beta: f64, alpha: f64, p_star: usize, p: usize) -> Self {
        Hyperparameters {
            beta_star: beta,
            beta,
            alpha,
            p_star,
            p,
            student_prior: StudentPrior::BinaryUniform,
            teacher_prior: TeacherPrior::BinaryArcsine,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if !(self.beta_star > 0.0 && self.beta_star.is_finite()) {
            v.push(Violation::ParameterOutOfRange { name: "beta_star", value: self.beta_star, constraint: "> 0" });
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            v.push(Violation::ParameterOutOfRange { name: "beta", value: self.beta, constraint: "> 0" });
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            v.push(Violation::ParameterOutOfRange { name: "alpha", value: self.alpha, constraint: ">= 0" });
        }
        for (name, val) in [("p_star", self.p_star), ("p", self.p)] {
            if val < 1 || val > ENUMERATION_CAP {
                v.push(Violation::ParameterOutOfRange {
                    name,
                    value: val as f64,
                    constraint: "1 <= value <= 20 (enumeration cap)",
                });
            }
        }
        v
    }
}

/// Teacher-pattern covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceSpec {
    Identity,
    Uniform { c: f64 },
    Explicit { matrix: Vec<Vec<f64>> },
    /// Projected Wishart draw; `d = 0` means "use the matrix side".
    Wishart { c: f64, d: usize, seed: u64 },
}

impl CovarianceSpec {
    pub fn explicit(m: &DMatrix<f64>) -> Self {
        CovarianceSpec::Explicit {
            matrix: (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect(),
        }
    }

    /// Builds the `p_star x p_star` matrix described here.
    pub fn realize(&self, p_star: usize) -> Result<DMatrix<f64>> {
        match self {
            CovarianceSpec::Identity => Ok(DMatrix::identity(p_star, p_star)),
            CovarianceSpec::Uniform { c } => Ok(uniform_covariance(p_star, *c)),
            CovarianceSpec::Explicit { matrix } => {
                let n = matrix.len();
                if n != p_star {
                    return Err(Error::DimensionMismatch { what: "covariance side", expected: p_star, found: n });
                }
                for row in matrix {
                    if row.len() != n {
                        return Err(Error::DimensionMismatch { what: "covariance row", expected: n, found: row.len() });
                    }
                }
                Ok(DMatrix::from_fn(n, n, |i, j| matrix[i][j]))
            }
            CovarianceSpec::Wishart { c, d, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                crate::sampling::sample_projected_wishart(*c, p_star, *d, &mut rng)
            }
        }
    }
}

/// `Q_{μν} = δ_{μν} + (1 − δ_{μν}) c`.
pub fn uniform_covariance(p: usize, c: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { c })
}

/// A validated experiment: hyperparameters plus the realized covariance.
#[derive(Debug, Clone)]
pub struct CheckedConfig {
    pub hyper: Hyperparameters,
    pub q: DMatrix<f64>,
}

/// Checks every constraint and reports all violations at once.
pub fn validate(h: &Hyperparameters, cov: &CovarianceSpec) -> Result<CheckedConfig> {
    let mut v = h.violations();
    match cov {
        CovarianceSpec::Uniform { c } if !(0.0..=1.0).contains(c) => {
            v.push(Violation::ParameterOutOfRange { name: "c", value: *c, constraint: "0 <= c <= 1" });
        }
        CovarianceSpec::Wishart { c, .. } if !(0.0..1.0).contains(c) => {
            v.push(Violation::ParameterOutOfRange { name: "c", value: *c, constraint: "0 <= c < 1" });
        }
        _ => {}
    }
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }
    let q = match cov.realize(h.p_star) {
        Ok(q) => q,
        Err(Error::DimensionMismatch { what, expected, found }) => {
            return Err(Error::Invalid(vec![Violation::DimensionMismatch { what, expected, found }]))
        }
        Err(e) => return Err(e),
    };
    if linalg::max_abs_diff(&q, &q.transpose()) > 1e-12 {
        v.push(Violation::ParameterOutOfRange { name: "Q asymmetry", value: linalg::max_abs_diff(&q, &q.transpose()), constraint: "Q = Q^T" });
    }
    if let Err(min_eigenvalue) = linalg::check_psd(&q) {
        v.push(Violation::NonPsdCovariance { min_eigenvalue });
    }
    if h.teacher_prior == TeacherPrior::BinaryArcsine {
        for i in 0..q.nrows() {
            if (q[(i, i)] - 1.0).abs() > 1e-12 {
                v.push(Violation::ParameterOutOfRange {
                    name: "Q diagonal",
                    value: q[(i, i)],
                    constraint: "unit diagonal for binary teacher patterns",
                });
                break;
            }
        }
    }
    if v.is_empty() {
        Ok(CheckedConfig { hyper: *h, q })
    } else {
        Err(Error::Invalid(v))
    }
}

/// Order parameters `m, s, q` and their conjugates.
///
/// `m` and `m_hat` are `p_star x p`; the rest are `p x p`. The diagonal of `s`
/// holds the self-overlap of a student pattern (1 for binary patterns) while
/// the diagonal of `s_hat` is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderParameterState {
    pub m: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub m_hat: DMatrix<f64>,
    pub s_hat: DMatrix<f64>,
    pub q_hat: DMatrix<f64>,
}

impl OrderParameterState {
    /// Assembles a state, symmetrizing `q` and `q_hat` and zeroing the
    /// diagonal of `s_hat`.
    pub fn new(
        m: DMatrix<f64>,
        s: DMatrix<f64>,
        q: DMatrix<f64>,
        m_hat: DMatrix<f64>,
        s_hat: DMatrix<f64>,
        q_hat: DMatrix<f64>,
    ) -> Result<Self> {
        let p_star = m.nrows();
        let p = m.ncols();
        for (what, mat, r, c) in [
            ("m_hat", &m_hat, p_star, p),
            ("s", &s, p, p),
            ("q", &q, p, p),
            ("s_hat", &s_hat, p, p),
            ("q_hat", &q_hat, p, p),
        ] {
            if mat.nrows() != r {
                return Err(Error::DimensionMismatch { what, expected: r, found: mat.nrows() });
            }
            if mat.ncols() != c {
                return Err(Error::DimensionMismatch { what, expected: c, found: mat.ncols() });
            }
        }
        let mut state = OrderParameterState { m, s, q, m_hat, s_hat, q_hat };
        state.normalize();
        Ok(state)
    }

    /// All-zero order parameters with `s = I`.
    pub fn paramagnetic(p_star: usize, p: usize) -> Self {
        OrderParameterState {
            m: DMatrix::zeros(p_star, p),
            s: DMatrix::identity(p, p),
            q: DMatrix::zeros(p, p),
            m_hat: DMatrix::zeros(p_star, p),
            s_hat: DMatrix::zeros(p, p),
            q_hat: DMatrix::zeros(p, p),
        }
    }

    pub(crate) fn normalize(&mut self) {
        self.q = linalg::symmetrize(&self.q);
        self.q_hat = linalg::symmetrize(&self.q_hat);
        self.s_hat.fill_diagonal(0.0);
    }

    pub fn p_star(&self) -> usize {
        self.m.nrows()
    }

    pub fn p(&self) -> usize {
        self.m.ncols()
    }

    pub fn matrices(&self) -> [&DMatrix<f64>; 6] {
        [&self.m, &self.s, &self.q, &self.m_hat, &self.s_hat, &self.q_hat]
    }

    pub fn matrices_mut(&mut self) -> [&mut DMatrix<f64>; 6] {
        [&mut self.m, &mut self.s, &mut self.q, &mut self.m_hat, &mut self.s_hat, &mut self.q_hat]
    }

    /// Largest absolute entry-wise difference across all six matrices.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.matrices()
            .iter()
            .zip(other.matrices().iter())
            .map(|(a, b)| linalg::max_abs_diff(a, b))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.matrices().iter().all(|m| m.iter().all(|x| x.is_finite()))
    }

    /// Relabels student hidden units: new index `k` takes old index `perm[k]`.
    pub fn permute_students(&self, perm: &[usize]) -> Self {
        let p = self.p();
        let cols = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), p, |i, k| m[(i, perm[k])]);
        let both = |m: &DMatrix<f64>| DMatrix::from_fn(p, p, |k, l| m[(perm[k], perm[l])]);
        OrderParameterState {
            m: cols(&self.m),
            s: both(&self.s),
            q: both(&self.q),
            m_hat: cols(&self.m_hat),
            s_hat: both(&self.s_hat),
            q_hat: both(&self.q_hat),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatternKind {
    Binary,
    Real,
}

/// Patterns stored one per row (`patterns x N`).
#[derive(Debug, Clone, PartialEq)]
pub struct PatternMatrix {
    values: DMatrix<f64>,
    kind: PatternKind,
}

impl PatternMatrix {
    pub fn new(values: DMatrix<f64>, kind: PatternKind) -> Result<Self> {
        if kind == PatternKind::Binary {
            if let Some(bad) = values.iter().find(|x| **x != 1.0 && **x != -1.0) {
                return Err(Error::ParameterOutOfRange {
                    name: "binary pattern entry",
                    value: *bad,
                    constraint: "entries in {-1, +1}",
                });
            }
        }
        Ok(PatternMatrix { values, kind })
    }

    pub fn binary(values: DMatrix<f64>) -> Result<Self> {
        Self::new(values, PatternKind::Binary)
    }

    pub fn real(values: DMatrix<f64>) -> Self {
        PatternMatrix { values, kind: PatternKind::Real }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    pub fn n_patterns(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.n_patterns()).map(|r| self.values.row(r).norm()).collect()
    }
}

/// How a dataset was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub burn_in_sweeps: usize,
    pub chains: usize,
    pub beta_star: f64,
}

/// `M x N` matrix of ±1 visible configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: DMatrix<f64>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(samples: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        if let Some(bad) = samples.iter().find(|x| **x != 1.0 && **x != -1.0) {
            return Err(Error::ParameterOutOfRange {
                name: "visible unit",
                value: *bad,
                constraint: "entries in {-1, +1}",
            });
        }
        Ok(Dataset { samples, provenance })
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// Concatenates the samples of `self` and `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { what: "dataset N", expected: self.dim(), found: other.dim() });
        }
        let m = self.len() + other.len();
        let samples = DMatrix::from_fn(m, self.dim(), |a, i| {
            if a < self.len() {
                self.samples[(a, i)]
            } else {
                other.samples[(a - self.len(), i)]
            }
        });
        Ok(Dataset { samples, provenance: self.provenance.clone() })
    }
}
