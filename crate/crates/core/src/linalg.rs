//! Symmetric positive-definite helpers: Cholesky factor, solve, log-determinant.
//!
//! Thin wrappers over `nalgebra`'s Cholesky decomposition with the error
//! contract used throughout the crate.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{GmrError, Result};

/// Relative tolerance under which a matrix is treated as symmetric.
pub const SYMMETRY_RTOL: f64 = 1e-9;

/// Largest `|c_ij - c_ji|` relative to the largest entry magnitude.
pub fn relative_asymmetry(c: &DMatrix<f64>) -> f64 {
    let scale = c.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let n = c.nrows();
    let mut gap = 0.0_f64;
    for i in 0..n {
        for j in 0..i {
            gap = gap.max((c[(i, j)] - c[(j, i)]).abs());
        }
    }
    gap / scale
}

/// `(C + Cᵀ) / 2`.
pub fn symmetrize(c: &DMatrix<f64>) -> DMatrix<f64> {
    (c + c.transpose()) * 0.5
}

fn decompose(c: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if !c.is_square() {
        return Err(GmrError::DimensionMismatch {
            index: None,
            expected: c.nrows(),
            found: c.ncols(),
        });
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(GmrError::NotPositiveDefinite { index: None });
    }
    let chol =
        Cholesky::new(c.clone()).ok_or(GmrError::NotPositiveDefinite { index: None })?;
    // nalgebra accepts tiny positive pivots that have underflowed to subnormals.
    if chol.l_dirty().diagonal().iter().any(|d| !(*d > 0.0) || !d.is_normal()) {
        return Err(GmrError::NotPositiveDefinite { index: None });
    }
    Ok(chol)
}

/// Lower-triangular `L` with `L Lᵀ = c`.
pub fn spd_cholesky(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(decompose(c)?.l())
}

/// Solves `c x = v`.
pub fn spd_solve(c: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != c.nrows() {
        return Err(GmrError::DimensionMismatch {
            index: None,
            expected: c.nrows(),
            found: v.len(),
        });
    }
    Ok(decompose(c)?.solve(v))
}

/// `log |c|`, computed as twice the sum of the log-diagonal of the factor.
pub fn spd_logdet(c: &DMatrix<f64>) -> Result<f64> {
    let chol = decompose(c)?;
    Ok(logdet_from_factor(chol.l_dirty()))
}

pub(crate) fn logdet_from_factor(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Solves `L Lᵀ x = v` given the lower factor.
pub(crate) fn solve_with_factor(l: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let y = l
        .solve_lower_triangular(v)
        .expect("factor diagonal is strictly positive");
    l.transpose()
        .solve_upper_triangular(&y)
        .expect("factor diagonal is strictly positive")
}
