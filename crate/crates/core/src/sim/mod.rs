//! Finite-size Monte Carlo of the teacher–student problem.

pub mod langevin;
pub mod lottery;
pub mod metropolis;
pub mod teacher;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PatternKind, PatternMatrix};

pub use langevin::train_student_gaussian;
pub use lottery::{run_lottery_experiment, LotteryConfig, LotteryResult};
pub use metropolis::{posterior_log_weight, train_student_binary, BinaryPosterior};
pub use teacher::generate_teacher_data;

/// Bias `λ Σ_μ ξ^μ · ξ*^{π(μ)}` added to the log weight of a binary student.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalField {
    #[serde(default = "default_field_strength")]
    pub strength: f64,
    /// `assignment[μ]` is the teacher pattern student `μ` is pulled toward.
    pub assignment: Vec<usize>,
}

fn default_field_strength() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LangevinConfig {
    pub step_size: f64,
    /// Step size at epoch `t` is `step_size · decay^t`.
    pub decay: f64,
    pub friction: f64,
    pub cd_steps: usize,
    /// Largest allowed `|ξ_iμ|` before the run is declared diverged.
    pub guard: f64,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        LangevinConfig { step_size: 0.02, decay: 1.0, friction: 1.0, cd_steps: 1, guard: 1e3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Visible dimension `N`.
    pub n: usize,
    /// Number of teacher samples `M`.
    pub m: usize,
    /// Block-Gibbs sweeps per independent teacher chain.
    pub gibbs_sweeps: usize,
    /// Student sweeps (binary) or Langevin steps (Gaussian).
    pub mc_sweeps: usize,
    pub external_field: Option<ExternalField>,
    pub langevin: LangevinConfig,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n: 512,
            m: 512,
            gibbs_sweeps: 200,
            mc_sweeps: 1000,
            external_field: None,
            langevin: LangevinConfig::default(),
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::ParameterOutOfRange { name: "N", value: 0.0, constraint: ">= 1" });
        }
        if self.langevin.cd_steps == 0 {
            return Err(Error::ParameterOutOfRange { name: "cd_steps", value: 0.0, constraint: ">= 1" });
        }
        let l = &self.langevin;
        if !(l.step_size > 0.0) || !(l.decay > 0.0 && l.decay <= 1.0) || !(l.friction > 0.0) {
            return Err(Error::Config("langevin step_size and friction must be > 0 and decay in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Overlaps recorded after one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapRecord {
    pub epoch: usize,
    /// `P* x P` matrix `ξ*·ξ / N`.
    pub m: DMatrix<f64>,
    /// Acceptance rate (Metropolis) or step size (Langevin) of the epoch.
    pub rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OverlapTrace {
    pub records: Vec<OverlapRecord>,
}

impl OverlapTrace {
    pub fn push(&mut self, epoch: usize, m: DMatrix<f64>, rate: f64) {
        self.records.push(OverlapRecord { epoch, m, rate });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Entry-wise mean and standard deviation over records `from..`.
    pub fn summary(&self, from: usize) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let w = self.records.get(from..)?;
        if w.is_empty() {
            return None;
        }
        let n = w.len() as f64;
        let mut mean = DMatrix::zeros(w[0].m.nrows(), w[0].m.ncols());
        for r in w {
            mean += &r.m;
        }
        mean /= n;
        let mut var = DMatrix::zeros(mean.nrows(), mean.ncols());
        for r in w {
            let d = &r.m - &mean;
            var += d.component_mul(&d);
        }
        var /= n;
        Some((mean, var.map(f64::sqrt)))
    }

    /// Mean of `|m_{γμ}|` over records `from..`.
    pub fn mean_abs(&self, from: usize) -> Option<DMatrix<f64>> {
        let w = self.records.get(from..)?;
        if w.is_empty() {
            return None;
        }
        let mut acc = DMatrix::zeros(w[0].m.nrows(), w[0].m.ncols());
        for r in w {
            acc += r.m.abs();
        }
        Some(acc / w.len() as f64)
    }
}

/// Training output: the trace and the final student patterns.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub trace: OverlapTrace,
    pub patterns: PatternMatrix,
}

/// `Q(ξ*^γ, ξ^μ) = ξ*^γ · ξ^μ / N` as a `P* x P` matrix.
pub fn measure_overlaps(xi: &PatternMatrix, xi_star: &PatternMatrix) -> Result<DMatrix<f64>> {
    if xi.dim() != xi_star.dim() {
        return Err(Error::DimensionMismatch { what: "pattern length N", expected: xi_star.dim(), found: xi.dim() });
    }
    Ok(xi_star.values() * xi.values().transpose() / xi.dim() as f64)
}

/// Rows of `initial` whose trained counterparts have the largest norms,
/// in descending norm order (ties go to the lower index).
pub fn magnitude_prune(trained: &PatternMatrix, initial: &PatternMatrix, keep: usize) -> Result<PatternMatrix> {
    if trained.n_patterns() != initial.n_patterns() {
        return Err(Error::DimensionMismatch {
            what: "pattern count",
            expected: initial.n_patterns(),
            found: trained.n_patterns(),
        });
    }
    if keep > trained.n_patterns() {
        return Err(Error::ParameterOutOfRange { name: "keep", value: keep as f64, constraint: "<= P" });
    }
    let norms = trained.row_norms();
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|a, b| norms[*b].total_cmp(&norms[*a]).then(a.cmp(b)));
    let rows: Vec<_> = order[..keep].iter().map(|r| initial.values().row(*r)).collect();
    let values = if rows.is_empty() { DMatrix::zeros(0, initial.dim()) } else { DMatrix::from_rows(&rows) };
    PatternMatrix::new(values, initial.kind())
}

/// Independent draws from the student prior.
pub fn random_patterns<R: Rng + ?Sized>(p: usize, n: usize, kind: PatternKind, rng: &mut R) -> PatternMatrix {
    let mut v = DMatrix::zeros(p, n);
    for mu in 0..p {
        for i in 0..n {
            v[(mu, i)] = match kind {
                PatternKind::Binary => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
                PatternKind::Real => rng.sample(StandardNormal),
            };
        }
    }
    PatternMatrix::new(v, kind).expect("prior draws are valid")
}

/// Student patterns placed near teacher patterns.
///
/// `assignment[μ] = Some(γ)` makes student `μ` a copy of teacher `γ` with
/// overlap about `m0`: binary entries are kept with probability `(1 + m0)/2`,
/// real entries are mixed as `m0 ξ* + √(1 − m0²) g`. `None` gives a prior
/// draw.
pub fn near_teacher_patterns<R: Rng + ?Sized>(
    xi_star: &PatternMatrix,
    assignment: &[Option<usize>],
    m0: f64,
    kind: PatternKind,
    rng: &mut R,
) -> Result<PatternMatrix> {
    if !(0.0..=1.0).contains(&m0) {
        return Err(Error::ParameterOutOfRange { name: "m0", value: m0, constraint: "0 <= m0 <= 1" });
    }
    let n = xi_star.dim();
    let mut out = random_patterns(assignment.len(), n, kind, rng).into_values();
    for (mu, a) in assignment.iter().enumerate() {
        let Some(g) = *a else { continue };
        if g >= xi_star.n_patterns() {
            return Err(Error::ParameterOutOfRange { name: "assignment", value: g as f64, constraint: "< P*" });
        }
        for i in 0..n {
            let t = xi_star.values()[(g, i)];
            out[(mu, i)] = match kind {
                PatternKind::Binary => {
                    let t = t.signum();
                    if rng.random::<f64>() < 0.5 * (1.0 + m0) {
                        t
                    } else {
                        -t
                    }
                }
                PatternKind::Real => m0 * t + (1.0 - m0 * m0).sqrt() * out[(mu, i)],
            };
        }
    }
    PatternMatrix::new(out, kind)
}
