//! Turnpike diagnostics on computed trajectories.

mod sweep;

pub use sweep::{sweep, SweepCell, SweepConfig, SweepResult};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::direct::{default_intervals, init_turnpike, init_turnpike_multipliers, solve_al_from, transcribe, AlConfig};
use crate::exec::{map_indexed, Execution};
use crate::lq::{LqBvp, LqProblem};
use crate::ocp::{BoundarySpec, ControlProblem, OcpError, StaticExtremal};
use crate::trajectory::Trajectory;

/// Samples below this are treated as floor noise by the fit.
const FIT_FLOOR: f64 = 1e-12;
const MIN_FIT_SAMPLES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Ocp(#[from] OcpError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("fit needs T > 4, got {0}")]
    Horizon(f64),
    #[error("only {found} usable samples in the fit window, need {MIN_FIT_SAMPLES}")]
    TooFewSamples { found: usize },
    #[error("epsilon must be positive, got {0}")]
    Epsilon(f64),
    #[error("sweep needs at least 2 distinct extremals, got {0}")]
    TooFewExtremals(usize),
}

fn check_dims(traj: &Trajectory, e: &StaticExtremal) -> Result<(), AnalysisError> {
    let (n, m) = traj.dims();
    if e.x.len() != n || e.u.len() != m || e.lambda.len() != n {
        return Err(AnalysisError::Dimension(format!(
            "trajectory has (n, m) = ({n}, {m}), extremal has ({}, {})",
            e.x.len(),
            e.u.len()
        )));
    }
    Ok(())
}

/// d(t) = ‖x − x̄‖ + ‖u − ū‖ + ‖λ − λ̄‖ with λ in the λ⁰ = −1 convention.
pub fn distance_series(traj: &Trajectory, e: &StaticExtremal) -> Result<Vec<f64>, AnalysisError> {
    check_dims(traj, e)?;
    Ok((0..traj.len())
        .map(|i| {
            (&traj.states[i] - &e.x).norm() + (&traj.controls[i] - &e.u).norm() + (traj.costate_unit(i) - &e.lambda).norm()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentialFit {
    /// max(c_left, c_right), so d ≲ C(e^{−νt} + e^{−ν(T−t)}).
    pub c: f64,
    pub c_left: f64,
    pub c_right: f64,
    pub nu: f64,
    /// Linear least-squares estimate used to start the refinement.
    pub linear_c: f64,
    pub linear_nu: f64,
    /// [0.1T, 0.45T] ∪ [0.55T, 0.9T].
    pub window: [f64; 4],
    pub samples: usize,
    /// RMS of log d − log model over the window.
    pub residual: f64,
}

fn two_sided(t: f64, horizon: f64, nu: f64) -> f64 {
    (-nu * t).exp() + (-nu * (horizon - t)).exp()
}

/// Fits d(t) ≈ C_l e^{−νt} + C_r e^{−ν(T−t)} on the window, one rate and
/// one amplitude per end.
pub fn fit_exponential(times: &[f64], d: &[f64], horizon: f64) -> Result<ExponentialFit, AnalysisError> {
    if !(horizon > 4.0) {
        return Err(AnalysisError::Horizon(horizon));
    }
    if times.len() != d.len() {
        return Err(AnalysisError::Dimension(format!("{} times for {} distances", times.len(), d.len())));
    }
    let window = [0.1 * horizon, 0.45 * horizon, 0.55 * horizon, 0.9 * horizon];
    let inside = |t: f64| (window[0]..=window[1]).contains(&t) || (window[2]..=window[3]).contains(&t);
    let pts: Vec<(f64, f64)> =
        times.iter().zip(d).filter(|(t, v)| inside(**t) && **v >= FIT_FLOOR).map(|(t, v)| (*t, v.ln())).collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(AnalysisError::TooFewSamples { found: pts.len() });
    }
    let left = |t: f64| t <= 0.5 * horizon;
    let one_sided = pts.iter().all(|p| left(p.0)) || pts.iter().all(|p| !left(p.0));

    // log d = log C_side − ν·min(t, T − t)
    let a = DMatrix::from_fn(pts.len(), 3, |i, j| {
        let t = pts[i].0;
        match j {
            0 => f64::from(u8::from(left(t) || one_sided)),
            1 => f64::from(u8::from(!left(t) && !one_sided)),
            _ => -t.min(horizon - t),
        }
    });
    let b = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
    let mut coef = (a.transpose() * &a).lu().solve(&(a.transpose() * &b)).unwrap_or_else(|| DVector::zeros(3));
    if one_sided {
        coef[1] = coef[0];
    }
    let (linear_log_c, linear_nu) = (coef[0].max(coef[1]), coef[2]);

    let resid = |p: &DVector<f64>| -> DVector<f64> {
        DVector::from_iterator(
            pts.len(),
            pts.iter().map(|&(t, l)| l - (p[0].exp() * (-p[2] * t).exp() + p[1].exp() * (-p[2] * (horizon - t)).exp()).ln()),
        )
    };
    let mut par = coef.clone();
    if linear_nu > 0.0 {
        let mut r = resid(&par);
        for _ in 0..100 {
            let jac = DMatrix::from_fn(pts.len(), 3, |i, j| {
                let t = pts[i].0;
                let e1 = par[0].exp() * (-par[2] * t).exp();
                let e2 = par[1].exp() * (-par[2] * (horizon - t)).exp();
                match j {
                    0 => -e1 / (e1 + e2),
                    1 => -e2 / (e1 + e2),
                    _ => (t * e1 + (horizon - t) * e2) / (e1 + e2),
                }
            });
            let jtj = jac.transpose() * &jac + DMatrix::identity(3, 3) * 1e-12;
            let Some(step) = jtj.lu().solve(&(-jac.transpose() * &r)) else { break };
            let mut alpha = 1.0;
            let mut improved = false;
            while alpha > 1e-6 {
                let trial = &par + &step * alpha;
                if trial[2] > 0.0 {
                    let rt = resid(&trial);
                    if rt.norm() < r.norm() {
                        par = trial;
                        r = rt;
                        improved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !improved || step.amax() < 1e-13 {
                break;
            }
        }
    }
    let residual = resid(&par).norm() / (pts.len() as f64).sqrt();
    let (c_left, c_right) = (par[0].exp(), par[1].exp());
    Ok(ExponentialFit {
        c: c_left.max(c_right),
        c_left,
        c_right,
        nu: par[2],
        linear_c: linear_log_c.exp(),
        linear_nu,
        window,
        samples: pts.len(),
        residual,
    })
}

/// Smallest C with d(t) ≤ C(e^{−νt} + e^{−ν(T−t)}) on every sample.
pub fn envelope_constant(times: &[f64], d: &[f64], horizon: f64, nu: f64) -> f64 {
    times.iter().zip(d).map(|(&t, &v)| v / two_sided(t, horizon, nu)).fold(0.0, f64::max)
}

/// Samples where d(t) > (1 + slack)·C(e^{−νt} + e^{−ν(T−t)}).
pub fn bound_violations(times: &[f64], d: &[f64], horizon: f64, c: f64, nu: f64, slack: f64) -> usize {
    times.iter().zip(d).filter(|(&t, &v)| v > (1.0 + slack) * c * two_sided(t, horizon, nu)).count()
}

/// Measure of {t : ‖(x(t) − x̄, u(t) − ū)‖ > ε}, trapezoid on the indicator.
pub fn measure_stat(traj: &Trajectory, e: &StaticExtremal, eps: f64) -> Result<f64, AnalysisError> {
    if !(eps > 0.0) {
        return Err(AnalysisError::Epsilon(eps));
    }
    check_dims(traj, e)?;
    let indicator: Vec<f64> = (0..traj.len())
        .map(|i| {
            let dx = (&traj.states[i] - &e.x).norm_squared();
            let du = (&traj.controls[i] - &e.u).norm_squared();
            if (dx + du).sqrt() > eps {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(traj.trapezoid(&indicator))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipativityReport {
    /// S(x(t)) = ⟨λ̄, x(t)⟩.
    pub storage: Vec<f64>,
    /// w = f⁰(x, u) − f⁰(x̄, ū).
    pub supply: Vec<f64>,
    /// max over t₀ < t₁ of G(t₀) − G(t₁), floored at 0.
    pub violation: f64,
    pub worst_interval: Option<(f64, f64)>,
}

/// Checks S(x(t₀)) + ∫_{t₀}^{t₁} w ≥ S(x(t₁)) on every grid subinterval.
pub fn dissipativity_check(traj: &Trajectory, p: &ControlProblem, e: &StaticExtremal) -> Result<DissipativityReport, AnalysisError> {
    check_dims(traj, e)?;
    let f0_bar = p.f0(&e.x, &e.u)?;
    let storage: Vec<f64> = traj.states.iter().map(|x| e.lambda.dot(x)).collect();
    let supply =
        traj.states.iter().zip(&traj.controls).map(|(x, u)| Ok(p.f0(x, u)? - f0_bar)).collect::<Result<Vec<_>, OcpError>>()?;

    // G(t) = ∫₀ᵗ w − S(x(t)) + S(x(0)); a drop of G is a violation
    let mut integral = 0.0;
    let mut peak = (f64::NEG_INFINITY, 0);
    let mut violation = 0.0;
    let mut worst_interval = None;
    for i in 0..traj.len() {
        if i > 0 {
            integral += 0.5 * (traj.times[i] - traj.times[i - 1]) * (supply[i] + supply[i - 1]);
        }
        let g = integral - storage[i] + storage[0];
        if peak.0 - g > violation {
            violation = peak.0 - g;
            worst_interval = Some((traj.times[peak.1], traj.times[i]));
        }
        if g > peak.0 {
            peak = (g, i);
        }
    }
    Ok(DissipativityReport { storage, supply, violation, worst_interval })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueGap {
    pub horizons: Vec<f64>,
    /// V(T) − T·f⁰(x̄, ū); None where the solve failed.
    pub gaps: Vec<Option<f64>>,
    /// |gap(T_max) − gap(T_max/2)| when both are available.
    pub convergence: Option<f64>,
}

/// V(T) by the closed form when LQ data and fixed ends are given, otherwise
/// by a turnpike-initialized direct solve.
pub fn value_gap(
    p: &ControlProblem,
    e: &StaticExtremal,
    horizons: &[f64],
    lq: Option<&LqProblem>,
    exec: Execution,
) -> Result<ValueGap, AnalysisError> {
    let f0_bar = p.f0(&e.x, &e.u)?;
    let value = |horizon: f64| -> Option<f64> {
        if let (Some(lq), BoundarySpec::FixedFixed { x0, x1 }) = (lq, p.boundary()) {
            let bvp = LqBvp::solve(lq, x0, x1, horizon).ok()?;
            return Some(bvp.cost((200.0 * horizon).ceil() as usize + 2000));
        }
        let tr = transcribe(p, horizon, default_intervals(horizon)).ok()?;
        let r = solve_al_from(&tr, &init_turnpike(&tr, e), &init_turnpike_multipliers(&tr, e), &AlConfig::default()).ok()?;
        r.converged.then_some(r.objective)
    };
    let gaps: Vec<Option<f64>> = map_indexed(horizons.len(), exec, |k| value(horizons[k]).map(|v| v - horizons[k] * f0_bar));
    let convergence = horizons
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .and_then(|(imax, &tmax)| {
            let ihalf = horizons.iter().position(|&t| (t - 0.5 * tmax).abs() <= 1e-9 * tmax)?;
            Some((gaps[imax]? - gaps[ihalf]?).abs())
        });
    Ok(ValueGap { horizons: horizons.to_vec(), gaps, convergence })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnpikeReport {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub fit: Option<ExponentialFit>,
    pub fit_error: Option<String>,
    /// (ε, Λ(ε)) pairs.
    pub measure: Vec<(f64, f64)>,
    pub dissipativity: DissipativityReport,
    pub midpoint_distance: f64,
}

pub fn turnpike_report(
    traj: &Trajectory,
    p: &ControlProblem,
    e: &StaticExtremal,
    eps: &[f64],
) -> Result<TurnpikeReport, AnalysisError> {
    let distances = distance_series(traj, e)?;
    let horizon = traj.horizon();
    let (fit, fit_error) = match fit_exponential(&traj.times, &distances, horizon) {
        Ok(f) if f.nu > 0.0 => (Some(f), None),
        Ok(f) => (None, Some(format!("fitted rate {} is not positive", f.nu))),
        Err(err) => (None, Some(err.to_string())),
    };
    let measure = eps.iter().map(|&x| Ok((x, measure_stat(traj, e, x)?))).collect::<Result<Vec<_>, AnalysisError>>()?;
    let dissipativity = dissipativity_check(traj, p, e)?;
    let midpoint_distance = distances[traj.nearest_index(0.5 * horizon)];
    Ok(TurnpikeReport { times: traj.times.clone(), distances, fit, fit_error, measure, dissipativity, midpoint_distance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::{static_newton, StaticGuess};
    use crate::registry;
    use crate::trajectory::{uniform_grid, CostateScale, TrajectoryMeta};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn lq_extremal() -> StaticExtremal {
        static_newton(&registry::lq_scalar(), &StaticGuess::new(&[0.0], &[0.0], &[0.0])).unwrap()
    }

    fn constant(e: &StaticExtremal, horizon: f64) -> Trajectory {
        let times = uniform_grid(horizon, 101);
        let k = times.len();
        Trajectory::new(
            times,
            vec![e.x.clone(); k],
            vec![e.lambda.clone(); k],
            vec![e.u.clone(); k],
            TrajectoryMeta::new("constant", CostateScale::Unit),
        )
        .unwrap()
    }

    #[test]
    fn equilibrium_diagnostics_vanish() {
        let e = lq_extremal();
        let traj = constant(&e, 10.0);
        assert!(distance_series(&traj, &e).unwrap().iter().all(|d| *d == 0.0));
        for eps in [1e-6, 0.1, 1.0] {
            assert_eq!(measure_stat(&traj, &e, eps).unwrap(), 0.0);
        }
        let rep = dissipativity_check(&traj, &registry::lq_scalar(), &e).unwrap();
        assert_eq!(rep.violation, 0.0);
        assert!(rep.supply.iter().all(|w| *w == 0.0));
    }

    #[test]
    fn fit_recovers_generator() {
        let horizon = 20.0;
        let times = uniform_grid(horizon, 2001);
        let d: Vec<f64> = times.iter().map(|&t| 3.0 * two_sided(t, horizon, 2.0)).collect();
        let f = fit_exponential(&times, &d, horizon).unwrap();
        assert!((f.c - 3.0).abs() < 0.03 && (f.nu - 2.0).abs() < 0.02, "{f:?}");
    }

    #[test]
    fn fit_separates_end_amplitudes() {
        let horizon = 20.0;
        let times = uniform_grid(horizon, 2001);
        let d: Vec<f64> = times.iter().map(|&t| 100.0 * (-0.7 * t).exp() + 2.0 * (-0.7 * (horizon - t)).exp()).collect();
        let f = fit_exponential(&times, &d, horizon).unwrap();
        assert!((f.nu - 0.7).abs() < 1e-6, "{f:?}");
        assert!((f.c_left - 100.0).abs() < 1e-3 && (f.c_right - 2.0).abs() < 1e-5 && f.c == f.c_left, "{f:?}");
    }

    #[test]
    fn fit_rejects_short_horizon_and_sparse_data() {
        assert!(matches!(fit_exponential(&[0.0, 1.0], &[1.0, 1.0], 4.0), Err(AnalysisError::Horizon(_))));
        let times = uniform_grid(10.0, 11);
        let d = vec![1.0; 11];
        assert!(matches!(fit_exponential(&times, &d, 10.0), Err(AnalysisError::TooFewSamples { .. })));
    }

    #[test]
    fn lq_rate_and_midpoint_bound() {
        let lq = registry::lq_scalar_data();
        let bvp = LqBvp::solve(&lq, &v(&[0.0]), &v(&[1.0]), 10.0).unwrap();
        let traj = bvp.trajectory(2001);
        let e = lq_extremal();
        let d = distance_series(&traj, &e).unwrap();
        assert!(d[1000] <= 10.0 * (-(2f64.sqrt()) * 5.0).exp());
        let f = fit_exponential(&traj.times, &d, 10.0).unwrap();
        let nu = 2f64.sqrt();
        assert!((f.nu - nu).abs() <= 0.1 * nu, "{f:?}");
    }

    #[test]
    fn measure_on_constructed_excursions() {
        let e = lq_extremal();
        let mut traj = constant(&e, 10.0);
        for i in 0..traj.len() {
            let t = traj.times[i];
            if t <= 1.0 || t >= 9.0 {
                traj.states[i][0] += 1.0;
            }
        }
        let lam = measure_stat(&traj, &e, 0.5).unwrap();
        assert!((lam - 2.0).abs() <= 0.1 + 1e-12, "{lam}");
    }

    #[test]
    fn lq_measure_is_uniform_in_horizon() {
        let lq = registry::lq_scalar_data();
        let e = lq_extremal();
        let lam = |horizon: f64| {
            let bvp = LqBvp::solve(&lq, &v(&[0.0]), &v(&[1.0]), horizon).unwrap();
            measure_stat(&bvp.trajectory((400.0 * horizon) as usize + 1), &e, 0.1).unwrap()
        };
        let (a, b) = (lam(10.0), lam(40.0));
        assert!((a - b).abs() < 0.1 * a, "{a} vs {b}");
    }

    #[test]
    fn lq_optimal_and_perturbed_trajectories_are_dissipative() {
        let lq = registry::lq_scalar_data();
        let p = registry::lq_scalar();
        let e = lq_extremal();
        for k in 0..10 {
            let (x0, x1) = (-2.0 + 0.45 * k as f64, 1.5 - 0.3 * k as f64);
            let bvp = LqBvp::solve(&lq, &v(&[x0]), &v(&[x1]), 8.0).unwrap();
            let rep = dissipativity_check(&bvp.trajectory(4001), &p, &e).unwrap();
            assert!(rep.violation <= 1e-6, "{}", rep.violation);
        }
        // a non-optimal trajectory of the same dynamics, x' = −x + u
        let times = uniform_grid(8.0, 8001);
        let us: Vec<f64> = times.iter().map(|t| (3.0 * t).sin() + 0.4).collect();
        let mut xs = vec![0.7];
        for i in 1..times.len() {
            let h = times[i] - times[i - 1];
            let prev = xs[i - 1];
            // trapezoid step, exact for the linear supply/storage balance
            xs.push((prev * (1.0 - 0.5 * h) + 0.5 * h * (us[i - 1] + us[i])) / (1.0 + 0.5 * h));
        }
        let traj = Trajectory::new(
            times,
            xs.iter().map(|x| v(&[*x])).collect(),
            vec![v(&[0.0]); us.len()],
            us.iter().map(|u| v(&[*u])).collect(),
            TrajectoryMeta::new("perturbed", CostateScale::Unit),
        )
        .unwrap();
        assert!(dissipativity_check(&traj, &p, &e).unwrap().violation <= 1e-6);
    }

    #[test]
    fn lq_value_gap_converges() {
        let p = registry::lq_scalar();
        let lq = registry::lq_scalar_data();
        let e = lq_extremal();
        let g = value_gap(&p, &e, &[10.0, 20.0, 40.0], Some(&lq), Execution::Sequential).unwrap();
        let gaps: Vec<f64> = g.gaps.iter().map(|x| x.unwrap()).collect();
        assert!((gaps[0] - gaps[1]).abs() < 1e-4 && (gaps[1] - gaps[2]).abs() < 1e-4, "{gaps:?}");
        assert!(g.convergence.unwrap() < 1e-4);
        for w in gaps.windows(2) {
            assert!(w[1] <= w[0] + 1e-6);
        }
    }

    #[test]
    fn value_gap_vanishes_at_the_turnpike() {
        let e = lq_extremal();
        let p = registry::lq_scalar().with_boundary(BoundarySpec::FixedFixed { x0: e.x.clone(), x1: e.x.clone() }).unwrap();
        let lq = registry::lq_scalar_data();
        let g = value_gap(&p, &e, &[5.0, 10.0], Some(&lq), Execution::Sequential).unwrap();
        assert!(g.gaps.iter().all(|x| x.unwrap().abs() < 1e-9));
        // direct solves stop at violation 1e-7, so the value is exact to about Σ|μ|·1e-7
        let g = value_gap(&p, &e, &[5.0, 10.0], None, Execution::Sequential).unwrap();
        assert!(g.gaps.iter().all(|x| x.unwrap().abs() < 1e-6), "{:?}", g.gaps);
    }

    #[test]
    fn envelope_bounds_its_own_samples() {
        let times = uniform_grid(10.0, 101);
        let d: Vec<f64> = times.iter().map(|&t| 2.0 * two_sided(t, 10.0, 1.5) * (1.0 + 0.1 * t.sin())).collect();
        let c = envelope_constant(&times, &d, 10.0, 1.5);
        assert_eq!(bound_violations(&times, &d, 10.0, c, 1.5, 0.0), 0);
        assert!(bound_violations(&times, &d, 10.0, 0.9 * c, 1.5, 0.0) > 0);
    }
}
