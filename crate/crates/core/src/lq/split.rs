use nalgebra::{Complex, DMatrix};

use super::{HamiltonianMatrix, LqError};
use crate::linalg::{self, MAX_CONDITION};

/// Eigenvalues closer than this to the imaginary axis break hyperbolicity.
pub const HYPERBOLICITY_TOL: f64 = 1e-9;

/// Stable/unstable decomposition P⁻¹MP ≈ blockdiag(M1, M2).
#[derive(Debug, Clone, PartialEq)]
pub struct Splitting {
    /// [V_s V_u], orthonormal bases of the stable then unstable subspace.
    pub p: DMatrix<f64>,
    pub p_inv: DMatrix<f64>,
    pub m1: DMatrix<f64>,
    pub m2: DMatrix<f64>,
    /// Smallest |Re λ| over the spectrum.
    pub nu: f64,
    pub eigenvalues: Vec<Complex<f64>>,
    /// ‖P⁻¹MP − blockdiag(M1, M2)‖ / ‖M‖.
    pub block_defect: f64,
}

impl Splitting {
    pub fn stable_dim(&self) -> usize {
        self.m1.nrows()
    }

    pub fn stable_basis(&self) -> DMatrix<f64> {
        self.p.columns(0, self.stable_dim()).into_owned()
    }

    pub fn unstable_basis(&self) -> DMatrix<f64> {
        let k = self.stable_dim();
        self.p.columns(k, self.p.ncols() - k).into_owned()
    }
}

pub fn split(h: &HamiltonianMatrix) -> Result<Splitting, LqError> {
    let s = split_matrix(&h.m)?;
    if s.stable_dim() != h.n() {
        return Err(LqError::StableDimension { stable: s.stable_dim(), expected: h.n() });
    }
    Ok(s)
}

/// Splits any real matrix without eigenvalues on the imaginary axis.
pub fn split_matrix(m: &DMatrix<f64>) -> Result<Splitting, LqError> {
    let dim = m.nrows();
    let eigenvalues = linalg::eigenvalues(m)?;
    if let Some(e) = eigenvalues.iter().min_by(|a, b| a.re.abs().total_cmp(&b.re.abs())) {
        if e.re.abs() < HYPERBOLICITY_TOL {
            return Err(LqError::NotHyperbolic { re: e.re, im: e.im, tol: HYPERBOLICITY_TOL });
        }
    }
    let nu = eigenvalues.iter().map(|e| e.re.abs()).fold(f64::INFINITY, f64::min);
    let stable = eigenvalues.iter().filter(|e| e.re < 0.0).count();

    let sign = matrix_sign(m)?;
    let identity = DMatrix::<f64>::identity(dim, dim);
    let stable_basis = range_basis(&((&identity - &sign) * 0.5), stable);
    let unstable_basis = range_basis(&((&identity + &sign) * 0.5), dim - stable);

    let mut p = DMatrix::zeros(dim, dim);
    p.columns_mut(0, stable).copy_from(&stable_basis);
    p.columns_mut(stable, dim - stable).copy_from(&unstable_basis);
    let p_inv = linalg::inverse_checked(&p, MAX_CONDITION)?;
    let d = &p_inv * m * &p;
    let m1 = d.view((0, 0), (stable, stable)).into_owned();
    let m2 = d.view((stable, stable), (dim - stable, dim - stable)).into_owned();
    let mut off = d.clone();
    off.view_mut((0, 0), (stable, stable)).fill(0.0);
    off.view_mut((stable, stable), (dim - stable, dim - stable)).fill(0.0);
    let block_defect = off.norm() / m.norm().max(f64::MIN_POSITIVE);

    Ok(Splitting { p, p_inv, m1, m2, nu, eigenvalues, block_defect })
}

/// Newton iteration for sign(M) with determinant scaling.
fn matrix_sign(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LqError> {
    let dim = m.nrows() as f64;
    let mut s = m.clone();
    let mut scaling = true;
    for _ in 0..100 {
        let lu = s.clone().lu();
        let inv = lu.try_inverse().ok_or(LqError::SignIteration)?;
        let c = if scaling {
            let log_det: f64 = s.clone().lu().u().diagonal().iter().map(|d| d.abs().ln()).sum();
            (-log_det / dim).exp()
        } else {
            1.0
        };
        let next = (&s * c + inv / c) * 0.5;
        let change = (&next - &s).norm();
        s = next;
        let size = s.norm();
        if change <= 1e-14 * size {
            return Ok(s);
        }
        if change < 1e-2 * size {
            scaling = false;
        }
    }
    // accept if the limit is an involution to working precision
    let id = DMatrix::<f64>::identity(m.nrows(), m.ncols());
    if (&s * &s - id).norm() < 1e-10 * s.norm() {
        Ok(s)
    } else {
        Err(LqError::SignIteration)
    }
}

/// Orthonormal basis of the `rank`-dimensional range of a projector.
fn range_basis(proj: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let svd = proj.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut basis = DMatrix::zeros(proj.nrows(), rank);
    for (k, &j) in order.iter().take(rank).enumerate() {
        basis.set_column(k, &u.column(j));
    }
    // singular vectors of nearly repeated singular values can be loose;
    // re-projecting is exact up to roundoff since the projector is idempotent
    for _ in 0..2 {
        basis = (proj * &basis).qr().q();
    }
    basis
}
