//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative tolerance below which a negative eigenvalue is treated as
/// round-off and clamped to zero.
pub const PSD_REL_TOL: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Eigen-decomposition of the symmetric part of `m`.
pub fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(m))
}

pub fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let e = sym_eigen(m);
    let min = e.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = e.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Checks positive semi-definiteness up to [`PSD_REL_TOL`]. On failure the
/// smallest eigenvalue is returned.
pub fn check_psd(m: &DMatrix<f64>) -> Result<(), f64> {
    let (min, max) = eigen_range(m);
    if min >= -PSD_REL_TOL * max.abs().max(f64::MIN_POSITIVE) {
        Ok(())
    } else {
        Err(min)
    }
}

/// Returns `L` with `L Lᵀ = m`. Cholesky is tried first; on failure (for
/// instance a singular matrix on the PSD boundary) an eigenvalue factor with
/// negative eigenvalues clamped to zero is used.
pub fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>, f64> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.l());
    }
    check_psd(m)?;
    let e = sym_eigen(m);
    let mut v = e.eigenvectors;
    for (j, lam) in e.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        v.column_mut(j).scale_mut(s);
    }
    Ok(v)
}

/// Symmetric square root with eigenvalues clamped at zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = sym_eigen(m);
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|x| x.max(0.0).sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

pub fn largest_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigen_range(m).1
}

/// Power iteration for the dominant eigenvalue of a (possibly nonsymmetric)
/// matrix with a real, nonnegative dominant eigenvalue.
pub fn power_iteration(a: &DMatrix<f64>, tol: f64, max_iter: usize) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    // Uneven start vector avoids landing exactly in an invariant subspace.
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
    x /= x.norm();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let y = a * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = x.dot(&y);
        let x_new = y / norm;
        let done = (next - lambda).abs() <= tol * next.abs().max(1.0) && (&x_new - &x).norm() < tol.sqrt();
        lambda = next;
        x = x_new;
        if done {
            break;
        }
    }
    lambda
}

/// Spectral condition number of a symmetric matrix, `inf` when singular.
pub fn sym_condition(m: &DMatrix<f64>) -> f64 {
    let e = sym_eigen(m);
    let abs: Vec<f64> = e.eigenvalues.iter().map(|x| x.abs()).collect();
    let max = abs.iter().cloned().fold(0.0, f64::max);
    let min = abs.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
