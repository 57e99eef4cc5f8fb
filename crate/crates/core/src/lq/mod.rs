//! Linear-quadratic problems: turnpike point, Hamiltonian matrix, hyperbolic
//! splitting, closed-form two-point solution and controllability tools.
//!
//! Costates in this module use the λ⁰ = −1/2 normalization, so that the
//! optimal control reads u = u_d + U⁻¹Bᵀλ. Use [`crate::trajectory::half_to_unit_costate`]
//! or [`LqTurnpike::lambda_unit`] to move to the λ⁰ = −1 convention.

mod bvp;
mod control;
mod split;

pub use bvp::{lq_bvp_closed_form, quasi_optimal_cost, LqBvp, QuasiOptimal};
pub use control::{kalman_rank, min_energy_steer, pbh_test, SteeringControl};
pub use split::{split, split_matrix, Splitting, HYPERBOLICITY_TOL};

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{self, LinalgError, MAX_CONDITION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LqError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{which} is not symmetric (defect {defect:.3e})")]
    NotSymmetric { which: &'static str, defect: f64 },
    #[error("{which} is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { which: &'static str, min_eigenvalue: f64 },
    #[error("U is numerically singular (condition number {condition:.3e})")]
    SingularU { condition: f64 },
    #[error("Hamiltonian matrix is singular: eigenvalue {re:.3e}{im:+.3e}i")]
    SingularM { re: f64, im: f64 },
    #[error("hyperbolicity fails: eigenvalue {re:.6e}{im:+.6e}i lies within {tol:e} of the imaginary axis")]
    NotHyperbolic { re: f64, im: f64, tol: f64 },
    #[error("stable subspace has dimension {stable}, expected {expected}")]
    StableDimension { stable: usize, expected: usize },
    #[error("boundary system is singular (condition number {condition:.3e})")]
    BoundarySystem { condition: f64 },
    #[error("Gramian is singular (condition number {condition:.3e})")]
    Gramian { condition: f64 },
    #[error("horizon {0} too short for the three-phase strategy (needs T > 2)")]
    HorizonTooShort(f64),
    #[error("matrix sign iteration did not converge")]
    SignIteration,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

const SYMMETRY_TOL: f64 = 1e-12;

/// Data (A, B, Q, U, x_d, u_d) of the problem
/// min ∫ (x−x_d)ᵀQ(x−x_d) + (u−u_d)ᵀU(u−u_d) subject to ẋ = Ax + Bu.
#[derive(Debug, Clone, PartialEq)]
pub struct LqProblem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    u: DMatrix<f64>,
    xd: DVector<f64>,
    ud: DVector<f64>,
}

impl LqProblem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        u: DMatrix<f64>,
        xd: DVector<f64>,
        ud: DVector<f64>,
    ) -> Result<Self, LqError> {
        let n = a.nrows();
        let m = b.ncols();
        if n == 0 || m == 0 {
            return Err(LqError::Dimension("n and m must be positive".into()));
        }
        if a.ncols() != n || b.nrows() != n {
            return Err(LqError::Dimension(format!("A is {}x{}, B is {}x{}", n, a.ncols(), b.nrows(), m)));
        }
        if q.shape() != (n, n) || u.shape() != (m, m) {
            return Err(LqError::Dimension("Q must be n x n and U must be m x m".into()));
        }
        if xd.len() != n || ud.len() != m {
            return Err(LqError::Dimension("x_d must have length n and u_d length m".into()));
        }
        for (which, mat) in [("Q", &q), ("U", &u)] {
            let defect = linalg::symmetry_defect(mat);
            if defect > SYMMETRY_TOL * mat.amax().max(1.0) {
                return Err(LqError::NotSymmetric { which, defect });
            }
            let min_eigenvalue = linalg::min_symmetric_eigenvalue(mat);
            if !(min_eigenvalue > 0.0) {
                return Err(LqError::NotPositiveDefinite { which, min_eigenvalue });
            }
        }
        Ok(Self { a, b, q, u, xd, ud })
    }

    /// Scalar problem with A = a, B = b, Q = q, U = r, x_d = xd, u_d = ud.
    pub fn scalar(a: f64, b: f64, q: f64, r: f64, xd: f64, ud: f64) -> Result<Self, LqError> {
        let s = |v: f64| DMatrix::from_element(1, 1, v);
        Self::new(s(a), s(b), s(q), s(r), DVector::from_element(1, xd), DVector::from_element(1, ud))
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }
    pub fn xd(&self) -> &DVector<f64> {
        &self.xd
    }
    pub fn ud(&self) -> &DVector<f64> {
        &self.ud
    }

    pub fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    pub fn running_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let dx = x - &self.xd;
        let du = u - &self.ud;
        dx.dot(&(&self.q * &dx)) + du.dot(&(&self.u * &du))
    }

    fn u_inverse(&self) -> Result<DMatrix<f64>, LqError> {
        let condition = linalg::condition_number(&self.u);
        if !(condition <= MAX_CONDITION) {
            return Err(LqError::SingularU { condition });
        }
        Ok(linalg::spd_inverse(&self.u)?)
    }

    /// Optimal control for a costate in the λ⁰ = −1/2 convention.
    pub fn control(&self, u_inv_bt: &DMatrix<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        &self.ud + u_inv_bt * lambda
    }
}

/// M = [[A, BU⁻¹Bᵀ], [Q, −Aᵀ]] together with U⁻¹Bᵀ and the affine term.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix {
    pub m: DMatrix<f64>,
    /// U⁻¹Bᵀ, mapping costates to control corrections.
    pub u_inv_bt: DMatrix<f64>,
    /// (B u_d; −Q x_d), the constant term of the extremal system.
    pub offset: DVector<f64>,
}

impl HamiltonianMatrix {
    pub fn n(&self) -> usize {
        self.m.nrows() / 2
    }
}

pub fn build_m(p: &LqProblem) -> Result<HamiltonianMatrix, LqError> {
    let n = p.n();
    let u_inv_bt = p.u_inverse()? * p.b.transpose();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&p.a);
    m.view_mut((0, n), (n, n)).copy_from(&(&p.b * &u_inv_bt));
    m.view_mut((n, 0), (n, n)).copy_from(&p.q);
    m.view_mut((n, n), (n, n)).copy_from(&(-p.a.transpose()));
    let mut offset = DVector::zeros(2 * n);
    offset.rows_mut(0, n).copy_from(&(&p.b * &p.ud));
    offset.rows_mut(n, n).copy_from(&(-(&p.q * &p.xd)));
    Ok(HamiltonianMatrix { m, u_inv_bt, offset })
}

/// Equilibrium (x̄, λ̄, ū) of the extremal system, λ̄ in the λ⁰ = −1/2 convention.
#[derive(Debug, Clone, PartialEq)]
pub struct LqTurnpike {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub u: DVector<f64>,
    pub residual: f64,
}

impl LqTurnpike {
    pub fn lambda_unit(&self) -> DVector<f64> {
        crate::trajectory::half_to_unit_costate(&self.lambda)
    }

    pub fn z(&self) -> DVector<f64> {
        let n = self.x.len();
        let mut z = DVector::zeros(2 * n);
        z.rows_mut(0, n).copy_from(&self.x);
        z.rows_mut(n, n).copy_from(&self.lambda);
        z
    }
}

const ZERO_EIGENVALUE_TOL: f64 = 1e-9;
const TURNPIKE_RESIDUAL_TOL: f64 = 1e-10;

pub fn lq_turnpike(p: &LqProblem) -> Result<LqTurnpike, LqError> {
    let h = build_m(p)?;
    lq_turnpike_from(p, &h)
}

pub fn lq_turnpike_from(p: &LqProblem, h: &HamiltonianMatrix) -> Result<LqTurnpike, LqError> {
    let eig = linalg::eigenvalues(&h.m)?;
    if let Some(e) = eig.iter().find(|e: &&Complex<f64>| e.norm() < ZERO_EIGENVALUE_TOL) {
        return Err(LqError::SingularM { re: e.re, im: e.im });
    }
    let z = h
        .m
        .clone()
        .lu()
        .solve(&(-&h.offset))
        .ok_or(LqError::SingularM { re: 0.0, im: 0.0 })?;
    let residual = (&h.m * &z + &h.offset).norm();
    let scale = 1.0 + h.m.norm() * z.norm() + h.offset.norm();
    if residual > TURNPIKE_RESIDUAL_TOL * scale {
        let condition = linalg::condition_number(&h.m);
        return Err(LqError::Linalg(LinalgError::Singular { condition }));
    }
    let n = p.n();
    let x = z.rows(0, n).into_owned();
    let lambda = z.rows(n, n).into_owned();
    let u = p.control(&h.u_inv_bt, &lambda);
    Ok(LqTurnpike { x, lambda, u, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar() -> LqProblem {
        LqProblem::scalar(-1.0, 1.0, 1.0, 1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn build_m_examples() {
        let p = LqProblem::scalar(0.0, 1.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(build_m(&p).unwrap().m, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert_eq!(build_m(&scalar()).unwrap().m, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, 1.0]));

        let p = circle_linear(DVector::zeros(2));
        let m = build_m(&p).unwrap().m;
        assert_eq!(m.view((2, 0), (2, 2)), DMatrix::<f64>::identity(2, 2));
        assert_eq!(m.view((0, 2), (2, 2)), DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
    }

    fn circle_linear(xd: DVector<f64>) -> LqProblem {
        LqProblem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
            xd,
            DVector::zeros(1),
        )
        .unwrap()
    }

    #[test]
    fn scalar_turnpike_is_one_half() {
        let t = lq_turnpike(&scalar()).unwrap();
        for v in [t.x[0], t.lambda[0], t.u[0]] {
            assert!((v - 0.5).abs() < 1e-14);
        }
        // independent check: minimize (x−1)² + x² over x = u
        let xs: f64 = 0.5;
        assert!((2.0 * (xs - 1.0) + 2.0 * xs).abs() < 1e-15);
        assert!(t.residual <= 1e-10);
    }

    #[test]
    fn zero_targets_give_zero_turnpike() {
        let t = lq_turnpike(&circle_linear(DVector::zeros(2))).unwrap();
        assert!(t.x.amax() < 1e-15 && t.lambda.amax() < 1e-15 && t.u.amax() < 1e-15);
    }

    #[test]
    fn circle_linearization_turnpike() {
        let t = lq_turnpike(&circle_linear(DVector::from_vec(vec![1.0, 0.0]))).unwrap();
        assert!((t.x[0] - 0.5).abs() < 1e-12);
        assert!(t.x[1].abs() < 1e-12);
        assert!((t.u[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_data() {
        assert!(matches!(
            LqProblem::scalar(0.0, 1.0, -1.0, 1.0, 0.0, 0.0),
            Err(LqError::NotPositiveDefinite { which: "Q", .. })
        ));
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        let r = LqProblem::new(
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            q,
            DMatrix::identity(1, 1),
            DVector::zeros(2),
            DVector::zeros(1),
        );
        assert!(matches!(r, Err(LqError::NotSymmetric { .. })));
    }

    #[test]
    fn uncontrollable_data_gives_singular_m() {
        // A = 0, B = (1; 0): the second state is neither steerable nor penalized off zero
        let p = LqProblem::new(
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
            DVector::zeros(2),
            DVector::zeros(1),
        )
        .unwrap();
        assert!(matches!(lq_turnpike(&p), Err(LqError::SingularM { .. })));
    }
}
