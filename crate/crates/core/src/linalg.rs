//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen};
use thiserror::Error;

/// Conditioning threshold above which a matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is numerically singular (condition number {condition:.3e})")]
    Singular { condition: f64 },
    #[error("eigenvalue iteration did not converge")]
    EigenFailure,
    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&largest) if largest > 0.0 => s.iter().filter(|&&v| v > rel_tol * largest).count(),
        _ => 0,
    }
}

/// 2-norm condition number; infinite for rank-deficient or non-square input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if !m.is_square() || m.is_empty() {
        return f64::INFINITY;
    }
    let s = singular_values(m);
    let (hi, lo) = (s[0], s[s.len() - 1]);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solves `a z = b`, refusing systems whose condition exceeds `max_condition`.
pub fn solve_checked(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    max_condition: f64,
) -> Result<DVector<f64>, LinalgError> {
    let condition = condition_number(a);
    if !(condition <= max_condition) {
        return Err(LinalgError::Singular { condition });
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or(LinalgError::Singular { condition })
}

pub fn inverse_checked(a: &DMatrix<f64>, max_condition: f64) -> Result<DMatrix<f64>, LinalgError> {
    let condition = condition_number(a);
    if !(condition <= max_condition) {
        return Err(LinalgError::Singular { condition });
    }
    a.clone()
        .try_inverse()
        .ok_or(LinalgError::Singular { condition })
}

pub fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Inverse of a symmetric positive definite matrix through Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let min_eigenvalue = min_symmetric_eigenvalue(m);
    if !(min_eigenvalue > 0.0) {
        return Err(LinalgError::NotPositiveDefinite { min_eigenvalue });
    }
    let condition = condition_number(m);
    if !(condition <= MAX_CONDITION) {
        return Err(LinalgError::Singular { condition });
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or(LinalgError::NotPositiveDefinite { min_eigenvalue })?;
    Ok(chol.inverse())
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>, LinalgError> {
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(LinalgError::EigenFailure)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Matrix exponential (Padé approximant with scaling and squaring).
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.is_empty() {
        return m.clone();
    }
    m.exp()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}
