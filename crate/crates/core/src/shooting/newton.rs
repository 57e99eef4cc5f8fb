use nalgebra::{DMatrix, DVector};

use super::{ShootingConfig, ShootingError};
use crate::linalg;

/// Row-equilibrated Jacobians beyond this are treated as singular.
const MAX_SCALED_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub root: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

fn fd_jacobian<F>(r: &F, y: &DVector<f64>, r0: &DVector<f64>, rel: f64) -> Result<DMatrix<f64>, ShootingError>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>, ShootingError>,
{
    let mut j = DMatrix::zeros(r0.len(), y.len());
    for c in 0..y.len() {
        let h = rel * y[c].abs().max(1.0);
        let mut yp = y.clone();
        yp[c] += h;
        let h = yp[c] - y[c];
        let rp = r(&yp)?;
        j.set_column(c, &((rp - r0) / h));
    }
    Ok(j)
}

fn newton_step(j: &DMatrix<f64>, r: &DVector<f64>) -> Result<DVector<f64>, ShootingError> {
    let mut js = j.clone();
    let mut rs = -r;
    for i in 0..js.nrows() {
        let s = js.row(i).amax();
        if s > 0.0 {
            js.row_mut(i).scale_mut(1.0 / s);
            rs[i] /= s;
        }
    }
    let condition = linalg::condition_number(&js);
    if !(condition <= MAX_SCALED_CONDITION) {
        return Err(ShootingError::SingularJacobian { condition });
    }
    js.lu().solve(&rs).ok_or(ShootingError::SingularJacobian { condition: f64::INFINITY })
}

/// Damped Newton with a forward-difference Jacobian and step halving on
/// ‖r‖₂. Converged iff ‖r‖∞ ≤ tolerance.
pub fn newton_fd<F>(residual: F, guess: &DVector<f64>, cfg: &ShootingConfig) -> Result<NewtonOutcome, ShootingError>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>, ShootingError>,
{
    let mut y = guess.clone();
    let mut r = residual(&y)?;
    if r.len() != y.len() {
        return Err(ShootingError::Dimension(format!("{} residuals for {} unknowns", r.len(), y.len())));
    }
    let mut merit = r.norm();
    let mut norm = r.amax();
    for it in 0..=cfg.max_iterations {
        if norm <= cfg.tolerance {
            return Ok(NewtonOutcome { root: y, residual_norm: norm, iterations: it });
        }
        if it == cfg.max_iterations {
            break;
        }
        let j = fd_jacobian(&residual, &y, &r, cfg.fd_step)?;
        let step = newton_step(&j, &r)?;
        let mut alpha = 1.0;
        loop {
            let trial = &y + &step * alpha;
            if let Ok(rt) = residual(&trial) {
                let mt = rt.norm();
                if mt.is_finite() && mt < (1.0 - 1e-4 * alpha) * merit {
                    y = trial;
                    norm = rt.amax();
                    merit = mt;
                    r = rt;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-10 {
                return Err(ShootingError::LineSearch { residual: norm });
            }
        }
    }
    Err(ShootingError::MaxIterations { iterations: cfg.max_iterations, residual: norm })
}
