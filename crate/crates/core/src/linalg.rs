//! Small dense linear-algebra helpers shared by training, regularization and scoring.
//!
//! All symmetric eigendecompositions go through nalgebra's `SymmetricEigen`, which
//! is a fixed sequential algorithm, so results do not depend on thread count.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative ridge added when a covariance statistic is close to singular.
pub const JITTER_RELATIVE: f64 = 1e-6;
/// Smallest eigenvalue (relative to trace/D) tolerated before jitter kicks in.
pub const JITTER_TRIGGER: f64 = 1e-10;

/// Returns `(m + mᵀ) / 2` with exactly mirrored off-diagonal entries.
pub fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    symmetrize(&mut out);
    out
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigendecomposition of the symmetric part of `m`.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "eigendecomposition of a matrix with non-finite entries".into(),
        ));
    }
    Ok(SymmetricEigen::new(symmetrized(m)))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    let eig = sym_eigen(m)?;
    Ok(eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min))
}

/// Average diagonal entry, used as the natural scale of a covariance.
pub fn mean_diag(m: &DMatrix<f64>) -> f64 {
    m.trace() / m.nrows() as f64
}

/// Adds `JITTER_RELATIVE * trace/D * I` when the smallest eigenvalue of `m` is
/// below `JITTER_TRIGGER * trace/D`. Returns the (possibly) jittered matrix and
/// whether a ridge was added.
pub fn jitter_if_singular(m: &DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, bool)> {
    jitter_if_singular_with(m, JITTER_RELATIVE, what)
}

pub fn jitter_if_singular_with(
    m: &DMatrix<f64>,
    relative: f64,
    what: &str,
) -> Result<(DMatrix<f64>, bool)> {
    let mut out = symmetrized(m);
    let scale = mean_diag(&out);
    let scale = if scale.is_finite() && scale > 0.0 {
        scale
    } else {
        1.0
    };
    let min_eig = min_eigenvalue(&out)?;
    if min_eig >= JITTER_TRIGGER * scale {
        return Ok((out, false));
    }
    let ridge = relative * scale;
    if min_eig + ridge <= 0.0 {
        return Err(Error::Numerical(format!(
            "{what} is indefinite (smallest eigenvalue {min_eig:e}, ridge {ridge:e})"
        )));
    }
    log::warn!("{what} is near-singular (smallest eigenvalue {min_eig:e}); adding ridge {ridge:e}");
    for i in 0..out.nrows() {
        out[(i, i)] += ridge;
    }
    Ok((out, true))
}

pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(symmetrized(m))
        .ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))
}

/// Inverse of an SPD matrix via Cholesky, explicitly symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let mut inv = cholesky(m, what)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Jitter if needed, then invert. Used when turning a covariance statistic into
/// a precision (or back).
pub fn regularized_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let (m, _) = jitter_if_singular(m, what)?;
    spd_inverse(&m, what)
}

pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|v| v.ln())
        .sum::<f64>()
}

/// `xᵀ M x`
pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

/// Largest absolute asymmetry `max |m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}
