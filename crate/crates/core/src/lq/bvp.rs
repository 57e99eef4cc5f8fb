use nalgebra::{DMatrix, DVector};

use super::{build_m, lq_turnpike_from, min_energy_steer, split, HamiltonianMatrix, LqError, LqProblem, LqTurnpike, Splitting};
use crate::linalg::{self, MAX_CONDITION};
use crate::ode;
use crate::trajectory::{uniform_grid, CostateScale, Trajectory, TrajectoryMeta};

/// Closed-form extremal of the LQ problem with x(0) = x0, x(T) = x1.
///
/// (x − x̄; λ − λ̄) = V_s v(t) + V_u w(t) with v(t) = e^{M1 t}v(0) and
/// w(t) = e^{M2(t−T)}w(T), so no exponential ever grows with T.
#[derive(Debug, Clone)]
pub struct LqBvp {
    problem: LqProblem,
    pub hamiltonian: HamiltonianMatrix,
    pub turnpike: LqTurnpike,
    pub splitting: Splitting,
    pub v0: DVector<f64>,
    pub w_t: DVector<f64>,
    pub horizon: f64,
    pub boundary_condition: f64,
}

impl LqBvp {
    pub fn solve(p: &LqProblem, x0: &DVector<f64>, x1: &DVector<f64>, horizon: f64) -> Result<Self, LqError> {
        let n = p.n();
        if x0.len() != n || x1.len() != n {
            return Err(LqError::Dimension("boundary states must have length n".into()));
        }
        if !(horizon > 0.0) {
            return Err(LqError::Dimension(format!("horizon {horizon} must be positive")));
        }
        let hamiltonian = build_m(p)?;
        let turnpike = lq_turnpike_from(p, &hamiltonian)?;
        let splitting = split(&hamiltonian)?;

        let xs = splitting.p.view((0, 0), (n, n)).into_owned();
        let xu = splitting.p.view((0, n), (n, n)).into_owned();
        let e1 = linalg::expm(&(&splitting.m1 * horizon));
        let e2 = linalg::expm(&(&splitting.m2 * -horizon));
        let mut k = DMatrix::zeros(2 * n, 2 * n);
        k.view_mut((0, 0), (n, n)).copy_from(&xs);
        k.view_mut((0, n), (n, n)).copy_from(&(&xu * &e2));
        k.view_mut((n, 0), (n, n)).copy_from(&(&xs * &e1));
        k.view_mut((n, n), (n, n)).copy_from(&xu);
        let mut rhs = DVector::zeros(2 * n);
        rhs.rows_mut(0, n).copy_from(&(x0 - &turnpike.x));
        rhs.rows_mut(n, n).copy_from(&(x1 - &turnpike.x));
        let boundary_condition = linalg::condition_number(&k);
        let sol = linalg::solve_checked(&k, &rhs, MAX_CONDITION)
            .map_err(|_| LqError::BoundarySystem { condition: boundary_condition })?;

        Ok(Self {
            problem: p.clone(),
            hamiltonian,
            turnpike,
            v0: sol.rows(0, n).into_owned(),
            w_t: sol.rows(n, n).into_owned(),
            splitting,
            horizon,
            boundary_condition,
        })
    }

    pub fn problem(&self) -> &LqProblem {
        &self.problem
    }

    /// Extremal (x; λ) at time t, λ in the λ⁰ = −1/2 convention.
    pub fn z_at(&self, t: f64) -> DVector<f64> {
        let v = linalg::expm(&(&self.splitting.m1 * t)) * &self.v0;
        let w = linalg::expm(&(&self.splitting.m2 * (t - self.horizon))) * &self.w_t;
        let n = self.problem.n();
        self.turnpike.z() + self.splitting.p.columns(0, n) * v + self.splitting.p.columns(n, n) * w
    }

    /// (x, λ, u) at time t.
    pub fn point(&self, t: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let n = self.problem.n();
        let z = self.z_at(t);
        let x = z.rows(0, n).into_owned();
        let lambda = z.rows(n, n).into_owned();
        let u = self.problem.control(&self.hamiltonian.u_inv_bt, &lambda);
        (x, lambda, u)
    }

    pub fn trajectory(&self, samples: usize) -> Trajectory {
        let times = uniform_grid(self.horizon, samples);
        let (mut xs, mut ls, mut us) = (vec![], vec![], vec![]);
        for &t in &times {
            let (x, l, u) = self.point(t);
            xs.push(x);
            ls.push(l);
            us.push(u);
        }
        let running: Vec<f64> = xs.iter().zip(&us).map(|(x, u)| self.problem.running_cost(x, u)).collect();
        let mut meta = TrajectoryMeta::new("lq", CostateScale::Half);
        meta.cost = crate::trajectory::trapezoid(&times, &running);
        Trajectory::new(times, xs, ls, us, meta).expect("uniform grid with consistent samples")
    }

    /// Cost by composite Simpson on `panels` (rounded up to even) panels.
    pub fn cost(&self, panels: usize) -> f64 {
        let panels = panels.max(2).div_ceil(2) * 2;
        let h = self.horizon / panels as f64;
        let mut sum = 0.0;
        for i in 0..=panels {
            let w = if i == 0 || i == panels {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let (x, _, u) = self.point(i as f64 * h);
            sum += w * self.problem.running_cost(&x, &u);
        }
        sum * h / 3.0
    }

    /// Max of ‖ż − (Mz + c)‖ over `points` interior times, ż from a
    /// five-point central difference.
    pub fn ode_residual(&self, points: usize) -> f64 {
        let rho = linalg::eigenvalues(&self.hamiltonian.m)
            .map(|e| e.iter().map(|v| v.norm()).fold(0.0, f64::max))
            .unwrap_or(1.0);
        let h = (1e-3 / rho.max(1.0)).min(self.horizon / 8.0);
        let points = points.max(2);
        let lo = 2.0 * h;
        let hi = self.horizon - 2.0 * h;
        (0..points)
            .map(|i| {
                let t = lo + (hi - lo) * i as f64 / (points - 1) as f64;
                let dz = (self.z_at(t - 2.0 * h) - self.z_at(t - h) * 8.0 + self.z_at(t + h) * 8.0
                    - self.z_at(t + 2.0 * h))
                    / (12.0 * h);
                let rhs = &self.hamiltonian.m * self.z_at(t) + &self.hamiltonian.offset;
                (dz - rhs).norm()
            })
            .fold(0.0, f64::max)
    }
}

pub fn lq_bvp_closed_form(
    p: &LqProblem,
    x0: &DVector<f64>,
    x1: &DVector<f64>,
    horizon: f64,
    samples: usize,
) -> Result<Trajectory, LqError> {
    Ok(LqBvp::solve(p, x0, x1, horizon)?.trajectory(samples))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiOptimal {
    pub three_phase: f64,
    pub optimal: f64,
    pub gap: f64,
}

const PHASE_STEPS: usize = 1000;

/// Cost of steering x̄ + d_from to x̄ + d_to in unit time around (x̄, ū).
fn transient_cost(p: &LqProblem, t: &LqTurnpike, d_from: &DVector<f64>, d_to: &DVector<f64>) -> Result<f64, LqError> {
    let steer = min_energy_steer(p.a(), p.b(), d_from, d_to, 1.0)?;
    let n = p.n();
    let mut y0 = DVector::zeros(n + 1);
    y0.rows_mut(0, n).copy_from(&(&t.x + d_from));
    let y1 = ode::rk4(
        |s, y| {
            let x = y.rows(0, n).into_owned();
            let u = &t.u + steer.control_at(s);
            let mut dy = DVector::zeros(n + 1);
            dy.rows_mut(0, n).copy_from(&p.dynamics(&x, &u));
            dy[n] = p.running_cost(&x, &u);
            dy
        },
        0.0,
        &y0,
        1.0,
        PHASE_STEPS,
    );
    Ok(y1[n])
}

/// Three-phase strategy (steer to x̄, hold, steer to x1) versus the optimum.
pub fn quasi_optimal_cost(p: &LqProblem, x0: &DVector<f64>, x1: &DVector<f64>, horizon: f64) -> Result<QuasiOptimal, LqError> {
    if !(horizon > 2.0) {
        return Err(LqError::HorizonTooShort(horizon));
    }
    let bvp = LqBvp::solve(p, x0, x1, horizon)?;
    let t = &bvp.turnpike;
    let zero = DVector::zeros(p.n());
    let first = transient_cost(p, t, &(x0 - &t.x), &zero)?;
    let last = transient_cost(p, t, &zero, &(x1 - &t.x))?;
    let hold = (horizon - 2.0) * p.running_cost(&t.x, &t.u);
    let three_phase = first + hold + last;
    let optimal = bvp.cost((200.0 * horizon).ceil().max(2000.0) as usize);
    Ok(QuasiOptimal { three_phase, optimal, gap: three_phase - optimal })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar() -> LqProblem {
        LqProblem::scalar(-1.0, 1.0, 1.0, 1.0, 1.0, 0.0).unwrap()
    }

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn equilibrium_data_gives_constant_trajectory() {
        let p = scalar();
        let traj = lq_bvp_closed_form(&p, &v(0.5), &v(0.5), 7.0, 50).unwrap();
        for i in 0..traj.len() {
            assert!((traj.states[i][0] - 0.5).abs() < 1e-14);
            assert!((traj.costates[i][0] - 0.5).abs() < 1e-14);
            assert!((traj.controls[i][0] - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn scalar_midpoint_is_close_to_turnpike() {
        let bvp = LqBvp::solve(&scalar(), &v(0.0), &v(1.0), 10.0).unwrap();
        let (x, _, _) = bvp.point(5.0);
        assert!((x[0] - 0.5).abs() <= 10.0 * (-(2f64.sqrt()) * 5.0).exp());
        assert!(bvp.ode_residual(200) <= 1e-8);
        let (xa, _, _) = bvp.point(0.0);
        let (xb, _, _) = bvp.point(10.0);
        assert!(xa[0].abs() < 1e-12 && (xb[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_matches_exponential_oracle() {
        // z(t) = z̄ + e^{M t}(z(0) − z̄), with λ(0) from the 2x2 shooting map
        let p = scalar();
        let horizon = 3.0;
        let bvp = LqBvp::solve(&p, &v(0.0), &v(1.0), horizon).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, 1.0]);
        let e = (m * horizon).exp();
        let zbar = DVector::from_vec(vec![0.5, 0.5]);
        // x(T) − x̄ = e00 (x0 − x̄) + e01 (λ0 − λ̄)
        let lambda0 = 0.5 + (0.5 - e[(0, 0)] * -0.5) / e[(0, 1)];
        let z0 = DVector::from_vec(vec![0.0, lambda0]);
        for &t in &[0.0, 0.7, 1.5, 2.9] {
            let m = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, 1.0]);
            let oracle = &zbar + (m * t).exp() * (&z0 - &zbar);
            assert!((bvp.z_at(t) - oracle).amax() < 1e-12);
        }
    }

    #[test]
    fn quasi_optimal_equilibrium_and_gap() {
        let p = scalar();
        let q = quasi_optimal_cost(&p, &v(0.5), &v(0.5), 10.0).unwrap();
        let f0 = p.running_cost(&v(0.5), &v(0.5));
        assert!((q.three_phase - 10.0 * f0).abs() < 1e-10);
        assert!((q.optimal - 10.0 * f0).abs() < 1e-10);

        let gaps: Vec<f64> = [10.0, 20.0, 40.0]
            .iter()
            .map(|&t| quasi_optimal_cost(&p, &v(0.0), &v(1.0), t).unwrap().gap)
            .collect();
        assert!(gaps[0] >= 0.0);
        for g in &gaps[1..] {
            assert!(((g - gaps[0]) / gaps[0]).abs() < 0.01);
        }
        assert!(matches!(quasi_optimal_cost(&p, &v(0.0), &v(1.0), 2.0), Err(LqError::HorizonTooShort(_))));
    }
}
