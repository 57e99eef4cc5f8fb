//! Extremal flow of the maximum principle and single-shooting solvers,
//! including the variant whose unknown sits at t = T/2.

mod newton;
mod solve;

pub use newton::{newton_fd, NewtonOutcome};
pub use solve::{shoot, shoot_classic, shoot_midpoint, ShootingGuess, ShootingResult};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::ocp::{BoundarySpec, ControlProblem, OcpError};
use crate::trajectory::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShootingError {
    #[error(transparent)]
    Ocp(#[from] OcpError),
    #[error("unsupported control structure: d2H/du2 is not negative definite (largest eigenvalue {max_eigenvalue:.3e})")]
    UnsupportedControl { max_eigenvalue: f64 },
    #[error("integration blew up near t = {t:.4}")]
    BlowUp { t: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("shooting Jacobian is singular (condition number {condition:.3e})")]
    SingularJacobian { condition: f64 },
    #[error("line search failed (residual {residual:.3e})")]
    LineSearch { residual: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("classic shooting needs a fixed initial state")]
    FreeInitialState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Classic,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingConfig {
    pub variant: Variant,
    pub steps_per_unit: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relative forward-difference step.
    pub fd_step: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self { variant: Variant::Midpoint, steps_per_unit: 100, tolerance: 1e-9, max_iterations: 50, fd_step: 1e-7 }
    }
}

impl ShootingConfig {
    pub fn classic() -> Self {
        Self { variant: Variant::Classic, ..Self::default() }
    }

    pub fn steps_for(&self, span: f64) -> usize {
        ((span.abs() * self.steps_per_unit as f64).ceil() as usize).max(1)
    }
}

/// State/costate pair z = (x, λ), costate in the λ⁰ = −1 convention.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalPoint {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
}

impl ExtremalPoint {
    pub fn new(x: DVector<f64>, lambda: DVector<f64>) -> Self {
        Self { x, lambda }
    }

    pub fn from_stacked(z: &DVector<f64>, n: usize) -> Self {
        Self { x: z.rows(0, n).into_owned(), lambda: z.rows(n, n).into_owned() }
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.x.len();
        let mut z = DVector::zeros(2 * n);
        z.rows_mut(0, n).copy_from(&self.x);
        z.rows_mut(n, n).copy_from(&self.lambda);
        z
    }
}

/// Maximizer of u ↦ H(x, λ, −1, u) over Ω and whether a bound is active.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlChoice {
    pub u: DVector<f64>,
    pub clamped: bool,
}

const INNER_MAX_ITERATIONS: usize = 50;

/// Concavity check and Newton ascent on the free components of u.
fn maximize_free(
    p: &ControlProblem,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
    u: &mut DVector<f64>,
    free: &[bool],
) -> Result<(), ShootingError> {
    let n = p.n();
    let idx: Vec<usize> = (0..u.len()).filter(|&j| free[j]).collect();
    if idx.is_empty() {
        return Ok(());
    }
    for _ in 0..INNER_MAX_ITERATIONS {
        let grad_full = p.hamiltonian_gradient_block(x, lambda, -1.0, u, n, u.len())?;
        let hess_full = p.hamiltonian_hessian_block(x, lambda, -1.0, u, n, u.len())?;
        let grad = DVector::from_iterator(idx.len(), idx.iter().map(|&j| grad_full[j]));
        let neg_hess = DMatrix::from_fn(idx.len(), idx.len(), |r, c| -hess_full[(idx[r], idx[c])]);
        let min_eig = linalg::min_symmetric_eigenvalue(&neg_hess);
        if !(min_eig > 0.0) {
            return Err(ShootingError::UnsupportedControl { max_eigenvalue: -min_eig });
        }
        if grad.amax() <= 1e-14 * (1.0 + lambda.amax()) {
            return Ok(());
        }
        let step = neg_hess.cholesky().expect("positive definite").solve(&grad);
        let h0 = p.hamiltonian(x, lambda, -1.0, u)?;
        let slope = grad.dot(&step);
        let mut alpha = 1.0;
        loop {
            let mut trial = u.clone();
            for (k, &j) in idx.iter().enumerate() {
                trial[j] += alpha * step[k];
            }
            match p.hamiltonian(x, lambda, -1.0, &trial) {
                Ok(h) if h >= h0 + 1e-4 * alpha * slope - 1e-13 * (1.0 + h0.abs()) || alpha < 1e-10 => {
                    *u = trial;
                    break;
                }
                _ => alpha *= 0.5,
            }
        }
        if alpha * step.amax() <= 1e-15 * (1.0 + u.amax()) {
            return Ok(());
        }
    }
    Ok(())
}

/// Pointwise maximization of the Hamiltonian, warm-started at `warm`.
pub fn control_from_costate(
    p: &ControlProblem,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
    warm: &DVector<f64>,
) -> Result<ControlChoice, ShootingError> {
    let m = p.m();
    let omega = p.omega();
    let mut u = DVector::from_fn(m, |j, _| omega.clamp(j, warm[j]));
    let mut free = vec![true; m];
    maximize_free(p, x, lambda, &mut u, &free)?;
    let mut clamped = false;
    if !omega.is_unbounded() {
        for _ in 0..=m {
            let mut changed = false;
            for j in 0..m {
                if free[j] && (u[j] < omega.lo[j] || u[j] > omega.hi[j]) {
                    u[j] = omega.clamp(j, u[j]);
                    free[j] = false;
                    changed = true;
                }
            }
            if !changed {
                // release bounds whose gradient points back into Ω
                let g = p.hamiltonian_gradient_block(x, lambda, -1.0, &u, p.n(), m)?;
                for j in 0..m {
                    if !free[j] && ((u[j] == omega.hi[j] && g[j] < 0.0) || (u[j] == omega.lo[j] && g[j] > 0.0)) {
                        free[j] = true;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            maximize_free(p, x, lambda, &mut u, &free)?;
        }
        clamped = free.iter().any(|f| !f);
    }
    let hess = p.hamiltonian_hessian_block(x, lambda, -1.0, &u, p.n(), m)?;
    let min_eig = linalg::min_symmetric_eigenvalue(&(-hess));
    if !(min_eig > 0.0) {
        return Err(ShootingError::UnsupportedControl { max_eigenvalue: -min_eig });
    }
    Ok(ControlChoice { u, clamped })
}

/// (∂H/∂λ, −∂H/∂x) at (x, λ, −1, u).
pub fn extremal_rhs_with(p: &ControlProblem, z: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, ShootingError> {
    let n = p.n();
    let x = z.rows(0, n).into_owned();
    let lambda = z.rows(n, n).into_owned();
    let mut dz = DVector::zeros(2 * n);
    dz.rows_mut(0, n).copy_from(&p.f(&x, u)?);
    dz.rows_mut(n, n).copy_from(&(-p.hamiltonian_gradient_block(&x, &lambda, -1.0, u, 0, n)?));
    Ok(dz)
}

/// Extremal vector field with the maximizing control; returns (ż, u).
pub fn extremal_rhs(
    p: &ControlProblem,
    z: &ExtremalPoint,
    warm: &DVector<f64>,
) -> Result<(DVector<f64>, ControlChoice), ShootingError> {
    let choice = control_from_costate(p, &z.x, &z.lambda, warm)?;
    let dz = extremal_rhs_with(p, &z.stacked(), &choice.u)?;
    Ok((dz, choice))
}

/// Sampled solution of the extremal flow.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalPath {
    pub times: Vec<f64>,
    pub z: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub clamp_events: usize,
}

const BLOW_UP: f64 = 1e12;

/// Classical RK4 from t0 to t1 (either direction) in `steps` steps.
pub fn integrate(
    p: &ControlProblem,
    z0: &ExtremalPoint,
    t0: f64,
    t1: f64,
    steps: usize,
    warm: &DVector<f64>,
) -> Result<ExtremalPath, ShootingError> {
    let n = p.n();
    if z0.x.len() != n || z0.lambda.len() != n || warm.len() != p.m() {
        return Err(ShootingError::Dimension("initial point or warm start".into()));
    }
    let steps = steps.max(1);
    let h = (t1 - t0) / steps as f64;
    let mut z = z0.stacked();
    let mut u = warm.clone();
    let mut path = ExtremalPath { times: Vec::with_capacity(steps + 1), z: vec![], u: vec![], clamp_events: 0 };
    let eval = |z: &DVector<f64>, u: &mut DVector<f64>, clamps: &mut usize| -> Result<DVector<f64>, ShootingError> {
        let ep = ExtremalPoint::from_stacked(z, n);
        let (dz, choice) = extremal_rhs(p, &ep, u)?;
        if choice.clamped {
            *clamps += 1;
        }
        *u = choice.u;
        Ok(dz)
    };
    for k in 0..=steps {
        let t = if k == steps { t1 } else { t0 + k as f64 * h };
        if !z.iter().all(|v| v.is_finite()) || z.amax() > BLOW_UP {
            return Err(ShootingError::BlowUp { t });
        }
        let mut clamps = 0;
        let k1 = eval(&z, &mut u, &mut clamps).map_err(|e| blow_up_or(e, t))?;
        path.times.push(t);
        path.z.push(z.clone());
        path.u.push(u.clone());
        if k == steps {
            path.clamp_events += clamps;
            break;
        }
        let k2 = eval(&(&z + &k1 * (0.5 * h)), &mut u, &mut clamps).map_err(|e| blow_up_or(e, t))?;
        let k3 = eval(&(&z + &k2 * (0.5 * h)), &mut u, &mut clamps).map_err(|e| blow_up_or(e, t))?;
        let k4 = eval(&(&z + &k3 * h), &mut u, &mut clamps).map_err(|e| blow_up_or(e, t))?;
        path.clamp_events += clamps;
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(path)
}

fn blow_up_or(e: ShootingError, t: f64) -> ShootingError {
    match e {
        ShootingError::Ocp(OcpError::Eval(_)) => ShootingError::BlowUp { t },
        other => other,
    }
}

/// Boundary conditions of the extremal problem at the two ends.
pub fn boundary_residual_points(
    p: &ControlProblem,
    start: &ExtremalPoint,
    end: &ExtremalPoint,
    gamma: &DVector<f64>,
) -> Result<DVector<f64>, ShootingError> {
    let n = p.n();
    let spec = p.boundary();
    if gamma.len() != spec.multiplier_count() {
        return Err(ShootingError::Dimension(format!(
            "expected {} terminal multipliers, got {}",
            spec.multiplier_count(),
            gamma.len()
        )));
    }
    let stack = |parts: &[DVector<f64>]| {
        let len = parts.iter().map(|v| v.len()).sum();
        let mut r = DVector::zeros(len);
        let mut at = 0;
        for v in parts {
            r.rows_mut(at, v.len()).copy_from(v);
            at += v.len();
        }
        r
    };
    Ok(match spec {
        BoundarySpec::FixedFixed { x0, x1 } => stack(&[&start.x - x0, &end.x - x1]),
        BoundarySpec::FixedFree { x0 } => stack(&[&start.x - x0, end.lambda.clone()]),
        BoundarySpec::FixedConstrained { x0, .. } => {
            let dg = p.dg(&end.x)?;
            stack(&[&start.x - x0, p.g(&end.x)?, &end.lambda - dg.transpose() * gamma])
        }
        BoundarySpec::Periodic => {
            debug_assert_eq!(start.x.len(), n);
            stack(&[&start.x - &end.x, &start.lambda - &end.lambda])
        }
    })
}

/// Boundary residual of a sampled trajectory.
pub fn boundary_residual(p: &ControlProblem, traj: &Trajectory, gamma: &DVector<f64>) -> Result<DVector<f64>, ShootingError> {
    let last = traj.len() - 1;
    let start = ExtremalPoint::new(traj.states[0].clone(), traj.costate_unit(0));
    let end = ExtremalPoint::new(traj.states[last].clone(), traj.costate_unit(last));
    boundary_residual_points(p, &start, &end, gamma)
}

/// max |H(t) − H(0)| / max(1, |H(0)|) along a trajectory.
pub fn hamiltonian_drift(p: &ControlProblem, traj: &Trajectory) -> Result<f64, ShootingError> {
    let h0 = p.hamiltonian(&traj.states[0], &traj.costate_unit(0), -1.0, &traj.controls[0])?;
    let mut worst: f64 = 0.0;
    for i in 0..traj.len() {
        let h = p.hamiltonian(&traj.states[i], &traj.costate_unit(i), -1.0, &traj.controls[i])?;
        worst = worst.max((h - h0).abs());
    }
    Ok(worst / h0.abs().max(1.0))
}
