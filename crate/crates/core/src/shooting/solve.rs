use nalgebra::DVector;
use serde::Serialize;

use super::{
    boundary_residual_points, hamiltonian_drift, integrate, newton_fd, ExtremalPath, ExtremalPoint, ShootingConfig,
    ShootingError, Variant,
};
use crate::ocp::{ControlProblem, StaticExtremal};
use crate::trajectory::{CostateScale, Trajectory, TrajectoryMeta};

/// Starting point for either variant. Classic shooting reads `z.lambda`
/// as λ(0); the midpoint variant reads all of `z` as z(T/2).
#[derive(Debug, Clone, PartialEq)]
pub struct ShootingGuess {
    pub z: ExtremalPoint,
    pub u: DVector<f64>,
    pub gamma: DVector<f64>,
}

impl ShootingGuess {
    pub fn from_turnpike(p: &ControlProblem, e: &StaticExtremal) -> Self {
        Self {
            z: ExtremalPoint::new(e.x.clone(), e.lambda.clone()),
            u: e.u.clone(),
            gamma: DVector::zeros(p.boundary().multiplier_count()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShootingResult {
    pub variant: Variant,
    pub converged: bool,
    pub residual_norm: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub unknowns: DVector<f64>,
    #[serde(skip)]
    pub gamma: DVector<f64>,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
    /// Stage evaluations in which a control bound was active.
    pub clamp_events: usize,
    pub hamiltonian_drift: Option<f64>,
    /// ‖z(T/2) − guess‖ for the midpoint variant.
    pub midpoint_distance: Option<f64>,
    pub failure: Option<String>,
}

fn path_to_trajectory(p: &ControlProblem, path: ExtremalPath, method: &str, cfg: &ShootingConfig) -> Option<Trajectory> {
    let n = p.n();
    let states = path.z.iter().map(|z| z.rows(0, n).into_owned()).collect();
    let costates = path.z.iter().map(|z| z.rows(n, n).into_owned()).collect();
    let mut meta = TrajectoryMeta::new(method, CostateScale::Unit);
    meta.tolerance = cfg.tolerance;
    let mut traj = Trajectory::new(path.times, states, costates, path.u, meta).ok()?;
    let running: Option<Vec<f64>> =
        (0..traj.len()).map(|i| p.f0(&traj.states[i], &traj.controls[i]).ok()).collect();
    traj.meta.cost = traj.trapezoid(&running?);
    Some(traj)
}

fn finish(
    p: &ControlProblem,
    variant: Variant,
    cfg: &ShootingConfig,
    outcome: Result<super::NewtonOutcome, ShootingError>,
    last: DVector<f64>,
    multipliers: usize,
    rebuild: impl Fn(&DVector<f64>) -> Result<ExtremalPath, ShootingError>,
) -> ShootingResult {
    let (root, residual_norm, iterations, failure) = match outcome {
        Ok(o) => (o.root, o.residual_norm, o.iterations, None),
        Err(e) => {
            let residual = match &e {
                ShootingError::LineSearch { residual } | ShootingError::MaxIterations { residual, .. } => *residual,
                _ => f64::INFINITY,
            };
            let iterations = match &e {
                ShootingError::MaxIterations { iterations, .. } => *iterations,
                _ => 0,
            };
            (last, residual, iterations, Some(e.to_string()))
        }
    };
    let len = root.len();
    let gamma = root.rows(len - multipliers, multipliers).into_owned();
    let method = match variant {
        Variant::Classic => "shooting-classic",
        Variant::Midpoint => "shooting-midpoint",
    };
    let (trajectory, clamp_events) = match rebuild(&root) {
        Ok(path) => {
            let clamps = path.clamp_events;
            (path_to_trajectory(p, path, method, cfg), clamps)
        }
        Err(_) => (None, 0),
    };
    let trajectory = trajectory.map(|mut t| {
        t.meta.iterations = iterations;
        t
    });
    let hamiltonian_drift = trajectory.as_ref().and_then(|t| hamiltonian_drift(p, t).ok());
    ShootingResult {
        variant,
        converged: failure.is_none(),
        residual_norm,
        iterations,
        unknowns: root,
        gamma,
        trajectory,
        clamp_events,
        hamiltonian_drift,
        midpoint_distance: None,
        failure,
    }
}

/// Newton on (λ(0), γ) with forward integration over [0, T].
pub fn shoot_classic(
    p: &ControlProblem,
    horizon: f64,
    guess: &ShootingGuess,
    cfg: &ShootingConfig,
) -> Result<ShootingResult, ShootingError> {
    let n = p.n();
    let x0 = p.boundary().initial_state().ok_or(ShootingError::FreeInitialState)?.clone();
    let k = p.boundary().multiplier_count();
    check_guess(p, guess)?;
    let steps = cfg.steps_for(horizon);
    let split = |y: &DVector<f64>| (ExtremalPoint::new(x0.clone(), y.rows(0, n).into_owned()), y.rows(n, k).into_owned());
    let run = |y: &DVector<f64>| {
        let (z0, _) = split(y);
        integrate(p, &z0, 0.0, horizon, steps, &guess.u)
    };
    let residual = |y: &DVector<f64>| -> Result<DVector<f64>, ShootingError> {
        let (z0, gamma) = split(y);
        let path = run(y)?;
        let end = ExtremalPoint::from_stacked(path.z.last().expect("non-empty path"), n);
        let full = boundary_residual_points(p, &z0, &end, &gamma)?;
        Ok(full.rows(n, full.len() - n).into_owned())
    };
    let mut y0 = DVector::zeros(n + k);
    y0.rows_mut(0, n).copy_from(&guess.z.lambda);
    y0.rows_mut(n, k).copy_from(&guess.gamma);
    let outcome = newton_fd(residual, &y0, cfg);
    Ok(finish(p, Variant::Classic, cfg, outcome, y0, k, run))
}

/// Newton on (z(T/2), γ), integrating backward to 0 and forward to T.
pub fn shoot_midpoint(
    p: &ControlProblem,
    horizon: f64,
    guess: &ShootingGuess,
    cfg: &ShootingConfig,
) -> Result<ShootingResult, ShootingError> {
    let n = p.n();
    let k = p.boundary().multiplier_count();
    check_guess(p, guess)?;
    let half = 0.5 * horizon;
    let steps = cfg.steps_for(half);
    let halves = |y: &DVector<f64>| -> Result<(ExtremalPath, ExtremalPath), ShootingError> {
        let mid = ExtremalPoint::from_stacked(&y.rows(0, 2 * n).into_owned(), n);
        let back = integrate(p, &mid, half, 0.0, steps, &guess.u)?;
        let fwd = integrate(p, &mid, half, horizon, steps, &guess.u)?;
        Ok((back, fwd))
    };
    let residual = |y: &DVector<f64>| -> Result<DVector<f64>, ShootingError> {
        let (back, fwd) = halves(y)?;
        let start = ExtremalPoint::from_stacked(back.z.last().expect("non-empty path"), n);
        let end = ExtremalPoint::from_stacked(fwd.z.last().expect("non-empty path"), n);
        boundary_residual_points(p, &start, &end, &y.rows(2 * n, k).into_owned())
    };
    let run = |y: &DVector<f64>| -> Result<ExtremalPath, ShootingError> {
        let (mut back, fwd) = halves(y)?;
        back.times.reverse();
        back.z.reverse();
        back.u.reverse();
        back.times[0] = 0.0;
        back.times.extend_from_slice(&fwd.times[1..]);
        back.z.extend_from_slice(&fwd.z[1..]);
        back.u.extend_from_slice(&fwd.u[1..]);
        back.clamp_events += fwd.clamp_events;
        Ok(back)
    };
    let mut y0 = DVector::zeros(2 * n + k);
    y0.rows_mut(0, 2 * n).copy_from(&guess.z.stacked());
    y0.rows_mut(2 * n, k).copy_from(&guess.gamma);
    let outcome = newton_fd(residual, &y0, cfg);
    let mut result = finish(p, Variant::Midpoint, cfg, outcome, y0, k, run);
    result.midpoint_distance = Some((result.unknowns.rows(0, 2 * n) - guess.z.stacked()).norm());
    Ok(result)
}

/// Dispatch on `cfg.variant`.
pub fn shoot(
    p: &ControlProblem,
    horizon: f64,
    guess: &ShootingGuess,
    cfg: &ShootingConfig,
) -> Result<ShootingResult, ShootingError> {
    match cfg.variant {
        Variant::Classic => shoot_classic(p, horizon, guess, cfg),
        Variant::Midpoint => shoot_midpoint(p, horizon, guess, cfg),
    }
}

fn check_guess(p: &ControlProblem, g: &ShootingGuess) -> Result<(), ShootingError> {
    if g.z.x.len() != p.n() || g.z.lambda.len() != p.n() || g.u.len() != p.m() {
        return Err(ShootingError::Dimension("guess does not match (n, m)".into()));
    }
    if g.gamma.len() != p.boundary().multiplier_count() {
        return Err(ShootingError::Dimension("guess has the wrong number of terminal multipliers".into()));
    }
    Ok(())
}
