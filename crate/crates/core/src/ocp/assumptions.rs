use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BoundarySpec, ControlProblem, OcpError, StaticExtremal};
use crate::linalg::{self, MAX_CONDITION};
use crate::lq::{self, LqError};

const SYMMETRY_TOL: f64 = 1e-10;

/// Second-order data of the Hamiltonian at a steady state (λ⁰ = −1).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationData {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub lambda: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub h_xx: DMatrix<f64>,
    pub h_xu: DMatrix<f64>,
    pub h_ux: DMatrix<f64>,
    pub h_uu: DMatrix<f64>,
    /// Ū = −H_uu.
    pub u_bar: DMatrix<f64>,
    /// W̄ = −H_xx − H_xu Ū⁻¹ H_ux.
    pub w_bar: DMatrix<f64>,
    /// Ā = A + B̄ Ū⁻¹ H_ux.
    pub a_bar: DMatrix<f64>,
}

impl LinearizationData {
    /// Matrix of the linearized extremal flow in (δx, δλ):
    /// [[Ā, B̄Ū⁻¹B̄ᵀ], [W̄, −Āᵀ]].
    pub fn extremal_matrix(&self) -> Result<DMatrix<f64>, OcpError> {
        let n = self.a.nrows();
        let u_inv = linalg::inverse_checked(&self.u_bar, MAX_CONDITION)?;
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.a_bar);
        m.view_mut((0, n), (n, n)).copy_from(&(&self.b * u_inv * self.b.transpose()));
        m.view_mut((n, 0), (n, n)).copy_from(&self.w_bar);
        m.view_mut((n, n), (n, n)).copy_from(&(-self.a_bar.transpose()));
        Ok(m)
    }

    /// Largest departure from the symmetry relations H_xu = H_uxᵀ, Ū = Ūᵀ, W̄ = W̄ᵀ.
    pub fn symmetry_defect(&self) -> f64 {
        (&self.h_xu - self.h_ux.transpose())
            .amax()
            .max(linalg::symmetry_defect(&self.u_bar))
            .max(linalg::symmetry_defect(&self.w_bar))
    }
}

pub fn linearize(p: &ControlProblem, e: &StaticExtremal) -> Result<LinearizationData, OcpError> {
    let (n, m) = (p.n(), p.m());
    let (x, u, lambda) = (&e.x, &e.u, &e.lambda);
    let jac = p.f_jacobian(x, u)?;
    let hess = p.hamiltonian_hessian(x, lambda, -1.0, u)?;
    let a = jac.columns(0, n).into_owned();
    let b = jac.columns(n, m).into_owned();
    let h_xx = hess.view((0, 0), (n, n)).into_owned();
    let h_xu = hess.view((0, n), (n, m)).into_owned();
    let h_ux = hess.view((n, 0), (m, n)).into_owned();
    let h_uu = hess.view((n, n), (m, m)).into_owned();
    let u_bar = -&h_uu;
    let condition = linalg::condition_number(&u_bar);
    if !(condition <= MAX_CONDITION) {
        return Err(OcpError::SingularU { condition });
    }
    let u_inv = linalg::inverse_checked(&u_bar, MAX_CONDITION)?;
    let w_bar = -&h_xx - &h_xu * &u_inv * &h_ux;
    let w_bar = (&w_bar + w_bar.transpose()) * 0.5;
    let a_bar = &a + &b * &u_inv * &h_ux;
    let data = LinearizationData {
        x: x.clone(),
        u: u.clone(),
        lambda: lambda.clone(),
        a,
        b,
        h_xx,
        h_xu,
        h_ux,
        h_uu,
        u_bar,
        w_bar,
        a_bar,
    };
    debug_assert!(data.symmetry_defect() <= SYMMETRY_TOL * (1.0 + hess.amax()));
    Ok(data)
}

/// Outcome of the three standing assumptions plus the hyperbolicity of
/// the linearized extremal flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub u_min_eigenvalue: f64,
    pub w_min_eigenvalue: f64,
    /// (i) Ū and W̄ symmetric positive definite.
    pub positive_definite: bool,
    pub kalman_rank: usize,
    /// (ii) Kalman condition for (A, B̄).
    pub kalman: bool,
    pub dr_rank: usize,
    pub dr_rows: usize,
    /// (iii) dR has full row rank at (x̄, x̄).
    pub boundary_regular: bool,
    /// No eigenvalue of the linearized extremal matrix near the imaginary axis.
    pub hyperbolic: bool,
    /// Spectral gap min |Re λ| of the linearized extremal matrix, if hyperbolic.
    pub nu: Option<f64>,
    pub symmetry_defect: f64,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.positive_definite && self.kalman && self.boundary_regular
    }
}

/// Structural rank of dR and its number of rows at (x̄, x̄).
fn boundary_rank(p: &ControlProblem, x: &DVector<f64>) -> Result<(usize, usize), OcpError> {
    let n = p.n();
    Ok(match p.boundary() {
        BoundarySpec::FixedFixed { .. } => (2 * n, 2 * n),
        BoundarySpec::FixedFree { .. } => (n, n),
        BoundarySpec::Periodic => (n, n),
        BoundarySpec::FixedConstrained { g, .. } => {
            let dg = p.dg(x)?;
            (n + linalg::numerical_rank(&dg, 1e-10), n + g.len())
        }
    })
}

pub fn check_assumptions(d: &LinearizationData, p: &ControlProblem) -> Result<AssumptionReport, OcpError> {
    let n = p.n();
    let u_min_eigenvalue = linalg::min_symmetric_eigenvalue(&d.u_bar);
    let w_min_eigenvalue = linalg::min_symmetric_eigenvalue(&d.w_bar);
    let kalman_rank = lq::kalman_rank(&d.a, &d.b).map_err(|e| OcpError::Dimension(e.to_string()))?;
    let (dr_rank, dr_rows) = boundary_rank(p, &d.x)?;
    let nu = match d.extremal_matrix().map(|m| lq::split_matrix(&m)) {
        Ok(Ok(s)) if s.stable_dim() == n => Some(s.nu),
        Ok(Ok(_)) | Ok(Err(LqError::NotHyperbolic { .. })) => None,
        Ok(Err(LqError::Linalg(e))) => return Err(OcpError::Linalg(e)),
        Ok(Err(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(AssumptionReport {
        u_min_eigenvalue,
        w_min_eigenvalue,
        positive_definite: u_min_eigenvalue > 0.0 && w_min_eigenvalue > 0.0,
        kalman_rank,
        kalman: kalman_rank == n,
        dr_rank,
        dr_rows,
        boundary_regular: dr_rank == dr_rows,
        hyperbolic: nu.is_some(),
        nu,
        symmetry_defect: d.symmetry_defect(),
    })
}
