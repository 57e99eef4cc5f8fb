use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BlockTridiagonal, DirectError, NodeData, Transcription};
use crate::ocp::BoundarySpec;

/// Penalties act on defects per unit time, c/h, so the raw-row penalty is
/// `initial_penalty / h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlConfig {
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub feasibility_tol: f64,
    pub stationarity_tol: f64,
}

impl Default for AlConfig {
    fn default() -> Self {
        Self {
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e9,
            max_outer: 20,
            max_inner: 100,
            feasibility_tol: 1e-7,
            stationarity_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NlpResult {
    pub converged: bool,
    #[serde(skip)]
    pub w: DVector<f64>,
    /// Defect rows first, then boundary rows.
    #[serde(skip)]
    pub multipliers: DVector<f64>,
    pub objective: f64,
    pub initial_objective: f64,
    pub max_violation: f64,
    pub stationarity: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub failure: Option<String>,
}

impl NlpResult {
    pub fn defect_multipliers(&self, tr: &Transcription) -> DVector<f64> {
        self.multipliers.rows(0, tr.n_defect_rows()).into_owned()
    }

    pub fn trajectory(&self, tr: &Transcription) -> Result<crate::trajectory::Trajectory, DirectError> {
        let mut t = tr.trajectory(&self.w, Some(&self.defect_multipliers(tr)))?;
        t.meta.tolerance = self.max_violation;
        t.meta.iterations = self.inner_iterations;
        Ok(t)
    }
}

/// Gradient of J + y·c, with y the constraint weights.
fn lagrangian_gradient(tr: &Transcription, w: &DVector<f64>, data: &[NodeData], y: &DVector<f64>) -> Result<DVector<f64>, DirectError> {
    let p = tr.problem();
    let (n, s, h) = (p.n(), tr.block(), tr.step());
    let mut g = DVector::zeros(tr.n_vars());
    for (i, d) in data.iter().enumerate() {
        g.rows_mut(i * s, s).axpy(tr.weight(i), &d.f0_grad, 1.0);
    }
    for i in 0..tr.intervals() {
        let yi = y.rows(i * n, n);
        // ∂c_i/∂v_i = [−I 0] − (h/2) Jf(v_i), ∂c_i/∂v_{i+1} = [I 0] − (h/2) Jf(v_{i+1})
        let ta = data[i].f_jac.transpose() * yi * (-0.5 * h);
        let tb = data[i + 1].f_jac.transpose() * yi * (-0.5 * h);
        g.rows_mut(i * s, s).add_assign_from(&ta);
        g.rows_mut((i + 1) * s, s).add_assign_from(&tb);
        for k in 0..n {
            g[i * s + k] -= yi[k];
            g[(i + 1) * s + k] += yi[k];
        }
    }
    let nd = tr.n_defect_rows();
    let last = tr.intervals() * s;
    match p.boundary() {
        BoundarySpec::FixedFixed { .. } => {
            for k in 0..n {
                g[k] += y[nd + k];
                g[last + k] += y[nd + n + k];
            }
        }
        BoundarySpec::FixedFree { .. } => {
            for k in 0..n {
                g[k] += y[nd + k];
            }
        }
        BoundarySpec::FixedConstrained { g: gf, .. } => {
            for k in 0..n {
                g[k] += y[nd + k];
            }
            let (x_last, _) = tr.node(w, tr.intervals());
            let dg = p.dg(&x_last)?;
            let t = dg.transpose() * y.rows(nd + n, gf.len());
            for k in 0..n {
                g[last + k] += t[k];
            }
        }
        BoundarySpec::Periodic => {
            for k in 0..n {
                g[k] += y[nd + k];
                g[last + k] -= y[nd + k];
            }
        }
    }
    Ok(g)
}

trait AddAssignFrom {
    fn add_assign_from(&mut self, v: &DVector<f64>);
}

impl AddAssignFrom for nalgebra::DVectorViewMut<'_, f64> {
    fn add_assign_from(&mut self, v: &DVector<f64>) {
        for k in 0..v.len() {
            self[k] += v[k];
        }
    }
}

/// Hessian of J + y·c + (ρ/2)|c|² with the Gauss–Newton penalty term;
/// curvature of the terminal constraint map g is omitted.
fn augmented_hessian(
    tr: &Transcription,
    w: &DVector<f64>,
    data: &[NodeData],
    y: &DVector<f64>,
    rho: f64,
) -> Result<BlockTridiagonal, DirectError> {
    let p = tr.problem();
    let (n, s, h, big_n) = (p.n(), tr.block(), tr.step(), tr.intervals());
    let mut a = BlockTridiagonal::zeros(tr.nodes(), s);
    for (j, d) in data.iter().enumerate() {
        a.diag[j] += &d.f0_hess * tr.weight(j);
        for k in 0..n {
            let mut coef = 0.0;
            if j > 0 {
                coef += y[(j - 1) * n + k];
            }
            if j < big_n {
                coef += y[j * n + k];
            }
            if coef != 0.0 {
                a.diag[j] += &d.f_hess[k] * (-0.5 * h * coef);
            }
        }
    }
    let sel = DMatrix::<f64>::identity(n, s);
    for i in 0..big_n {
        let pa = -&sel - &data[i].f_jac * (0.5 * h);
        let qb = &sel - &data[i + 1].f_jac * (0.5 * h);
        a.diag[i] += pa.transpose() * &pa * rho;
        a.diag[i + 1] += qb.transpose() * &qb * rho;
        a.sub[i] += qb.transpose() * &pa * rho;
    }
    let sts = sel.transpose() * &sel * rho;
    match p.boundary() {
        BoundarySpec::FixedFixed { .. } => {
            a.diag[0] += &sts;
            a.diag[big_n] += &sts;
        }
        BoundarySpec::FixedFree { .. } => a.diag[0] += &sts,
        BoundarySpec::FixedConstrained { .. } => {
            a.diag[0] += &sts;
            let (x_last, _) = tr.node(w, big_n);
            let gj = p.dg(&x_last)? * &sel;
            a.diag[big_n] += gj.transpose() * gj * rho;
        }
        BoundarySpec::Periodic => {
            let mut g = DMatrix::zeros(tr.n_vars(), n);
            for k in 0..n {
                g[(k, k)] = 1.0;
                g[(big_n * s + k, k)] = -1.0;
            }
            a.corner = Some((g, rho));
        }
    }
    Ok(a)
}

struct Bounds {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl Bounds {
    fn new(tr: &Transcription) -> Self {
        let p = tr.problem();
        let (n, m, s) = (p.n(), p.m(), tr.block());
        let mut lo = DVector::from_element(tr.n_vars(), f64::NEG_INFINITY);
        let mut hi = DVector::from_element(tr.n_vars(), f64::INFINITY);
        for i in 0..tr.nodes() {
            for j in 0..m {
                lo[i * s + n + j] = p.omega().lo[j];
                hi[i * s + n + j] = p.omega().hi[j];
            }
        }
        Self { lo, hi }
    }

    fn project(&self, w: &mut DVector<f64>) {
        for k in 0..w.len() {
            w[k] = w[k].max(self.lo[k]).min(self.hi[k]);
        }
    }

    /// Entries at a bound with the gradient pushing outward.
    fn active(&self, w: &DVector<f64>, g: &DVector<f64>) -> Vec<bool> {
        (0..w.len()).map(|k| (w[k] <= self.lo[k] && g[k] > 0.0) || (w[k] >= self.hi[k] && g[k] < 0.0)).collect()
    }

    fn projected(&self, w: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
        let act = self.active(w, g);
        DVector::from_fn(g.len(), |k, _| if act[k] { 0.0 } else { g[k] })
    }
}

fn merit(j: f64, c: &DVector<f64>, mu: &DVector<f64>, rho: f64) -> f64 {
    j + mu.dot(c) + 0.5 * rho * c.norm_squared()
}

fn factor_regularized(a: &mut BlockTridiagonal, active: &[bool]) -> super::blocktri::Factor {
    let s = a.diag[0].nrows();
    for (k, &act) in active.iter().enumerate() {
        if act {
            let (b, r) = (k / s, k % s);
            for c in 0..s {
                a.diag[b][(r, c)] = 0.0;
                a.diag[b][(c, r)] = 0.0;
                if b > 0 {
                    a.sub[b - 1][(r, c)] = 0.0;
                }
                if b < a.sub.len() {
                    a.sub[b][(c, r)] = 0.0;
                }
            }
            a.diag[b][(r, r)] = 1.0;
            if let Some((g, _)) = &mut a.corner {
                g.row_mut(k).fill(0.0);
            }
        }
    }
    if let Some(f) = a.factor(0.0) {
        return f;
    }
    let scale = a.diag.iter().map(|d| d.amax()).fold(1.0, f64::max);
    let mut shift = 1e-10 * scale;
    loop {
        if let Some(f) = a.factor(shift) {
            return f;
        }
        shift *= 10.0;
    }
}

/// Minimizes J subject to c = 0 and the control box, from zero multipliers.
pub fn solve_al(tr: &Transcription, init: &DVector<f64>, cfg: &AlConfig) -> Result<NlpResult, DirectError> {
    solve_al_from(tr, init, &DVector::zeros(tr.n_constraints()), cfg)
}

/// As [`solve_al`] with given initial multipliers.
pub fn solve_al_from(
    tr: &Transcription,
    init: &DVector<f64>,
    multipliers: &DVector<f64>,
    cfg: &AlConfig,
) -> Result<NlpResult, DirectError> {
    if init.len() != tr.n_vars() {
        return Err(DirectError::Dimension(format!("initial vector has {} entries, expected {}", init.len(), tr.n_vars())));
    }
    if multipliers.len() != tr.n_constraints() {
        return Err(DirectError::Dimension(format!("{} multipliers, expected {}", multipliers.len(), tr.n_constraints())));
    }
    let bounds = Bounds::new(tr);
    let mut w = init.clone();
    bounds.project(&mut w);
    let initial_objective = tr.objective(&w)?;
    let mut mu = multipliers.clone();
    let mut rho = cfg.initial_penalty / tr.step();
    let max_rho = cfg.max_penalty / tr.step();
    let inner_tol = cfg.stationarity_tol;
    let mut inner_total = 0;
    let mut violation = f64::INFINITY;
    let mut stationarity = f64::INFINITY;

    for outer in 1..=cfg.max_outer {
        let (mut j, mut c) = tr.objective_and_constraints(&w)?;
        let mut inner_ok = false;
        let mut stalled = false;
        let mut pg_norm = f64::INFINITY;
        for _ in 0..cfg.max_inner {
            let data = tr.node_data(&w)?;
            let y = &mu + &c * rho;
            let g = lagrangian_gradient(tr, &w, &data, &y)?;
            let pg = bounds.projected(&w, &g);
            pg_norm = pg.amax();
            if pg_norm <= inner_tol {
                inner_ok = true;
                break;
            }
            inner_total += 1;
            let active = bounds.active(&w, &g);
            let mut hess = augmented_hessian(tr, &w, &data, &y, rho)?;
            let factor = factor_regularized(&mut hess, &active);
            let step = factor.solve(&(-&pg));
            let m0 = merit(j, &c, &mu, rho);
            // near the solution the merit change drowns in roundoff
            let flat = g.dot(&step).abs() <= 1e-13 * (1.0 + m0.abs());
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha >= 1e-12 {
                let mut trial = &w + &step * alpha;
                bounds.project(&mut trial);
                if let Ok((jt, ct)) = tr.objective_and_constraints(&trial) {
                    let mt = merit(jt, &ct, &mu, rho);
                    let decrease = g.dot(&(&trial - &w));
                    if mt.is_finite() && (mt <= m0 + 1e-4 * decrease || (flat && mt <= m0 + 1e-13 * (1.0 + m0.abs()))) {
                        w = trial;
                        j = jt;
                        c = ct;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                stalled = true;
                break;
            }
        }
        if !inner_ok && (stalled || outer == cfg.max_outer || rho >= max_rho) {
            let e = DirectError::InnerFailure { outer, gradient: pg_norm };
            return Ok(failed(w, mu, j, initial_objective, c.amax(), pg_norm, outer, inner_total, e));
        }
        if !inner_ok {
            // iteration cap with progress: tighten the penalty, keep the multipliers
            rho = (rho * cfg.penalty_growth).min(max_rho);
            continue;
        }
        mu += &c * rho;
        violation = c.amax();
        let data = tr.node_data(&w)?;
        stationarity = bounds.projected(&w, &lagrangian_gradient(tr, &w, &data, &mu)?).amax();
        if violation <= cfg.feasibility_tol && stationarity <= cfg.stationarity_tol {
            return Ok(NlpResult {
                converged: true,
                w,
                multipliers: mu,
                objective: j,
                initial_objective,
                max_violation: violation,
                stationarity,
                outer_iterations: outer,
                inner_iterations: inner_total,
                failure: None,
            });
        }
        rho = (rho * cfg.penalty_growth).min(max_rho);
    }
    let j = tr.objective(&w)?;
    let e = DirectError::IterationCap { violation, stationarity };
    Ok(failed(w, mu, j, initial_objective, violation, stationarity, cfg.max_outer, inner_total, e))
}

#[allow(clippy::too_many_arguments)]
fn failed(
    w: DVector<f64>,
    mu: DVector<f64>,
    objective: f64,
    initial_objective: f64,
    violation: f64,
    stationarity: f64,
    outer: usize,
    inner: usize,
    e: DirectError,
) -> NlpResult {
    NlpResult {
        converged: false,
        w,
        multipliers: mu,
        objective,
        initial_objective,
        max_violation: violation,
        stationarity,
        outer_iterations: outer,
        inner_iterations: inner,
        failure: Some(e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direct::{init_turnpike, transcribe};
    use crate::lq::LqBvp;
    use crate::ocp::{static_newton, ControlBounds, ControlProblem, StaticGuess};
    use crate::registry;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn lq_solve(intervals: usize, horizon: f64) -> (Transcription, NlpResult) {
        let p = registry::lq_scalar();
        let e = static_newton(&p, &StaticGuess::new(&[0.0], &[0.0], &[0.0])).unwrap();
        let tr = transcribe(&p, horizon, intervals).unwrap();
        let r = solve_al(&tr, &init_turnpike(&tr, &e), &AlConfig::default()).unwrap();
        (tr, r)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = registry::exa();
        let tr = transcribe(&p, 1.0, 6).unwrap();
        let w = DVector::from_fn(tr.n_vars(), |i, _| 0.3 * (i as f64 * 0.7).sin() + 1.0);
        let y = DVector::from_fn(tr.n_constraints(), |i, _| (i as f64 * 1.3).cos());
        let g = lagrangian_gradient(&tr, &w, &tr.node_data(&w).unwrap(), &y).unwrap();
        let lag = |w: &DVector<f64>| {
            let (j, c) = tr.objective_and_constraints(w).unwrap();
            j + y.dot(&c)
        };
        for k in 0..tr.n_vars() {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[k] += 1e-6;
            wm[k] -= 1e-6;
            let fd = (lag(&wp) - lag(&wm)) / 2e-6;
            assert!((fd - g[k]).abs() < 1e-6 * (1.0 + fd.abs()), "entry {k}: {fd} vs {}", g[k]);
        }
    }

    /// Dense KKT solve of the same discrete quadratic program.
    fn discrete_lq_oracle(intervals: usize, horizon: f64) -> f64 {
        let (nn, h) = (intervals, horizon / intervals as f64);
        let nv = 2 * (nn + 1);
        let nc = nn + 2;
        let wt = |i: usize| if i == 0 || i == nn { 0.5 * h } else { h };
        let mut k = DMatrix::zeros(nv + nc, nv + nc);
        let mut rhs = DVector::zeros(nv + nc);
        for i in 0..=nn {
            k[(2 * i, 2 * i)] = 2.0 * wt(i);
            k[(2 * i + 1, 2 * i + 1)] = 2.0 * wt(i);
            rhs[2 * i] = 2.0 * wt(i);
        }
        let mut put = |row: usize, col: usize, v: f64| {
            k[(nv + row, col)] = v;
            k[(col, nv + row)] = v;
        };
        for i in 0..nn {
            put(i, 2 * i + 2, 1.0 + 0.5 * h);
            put(i, 2 * i, -1.0 + 0.5 * h);
            put(i, 2 * i + 1, -0.5 * h);
            put(i, 2 * i + 3, -0.5 * h);
        }
        put(nn, 0, 1.0);
        put(nn + 1, 2 * nn, 1.0);
        rhs[nv + nn + 1] = 1.0;
        let sol = k.lu().solve(&rhs).unwrap();
        (0..=nn).map(|i| wt(i) * ((sol[2 * i] - 1.0).powi(2) + sol[2 * i + 1].powi(2))).sum()
    }

    #[test]
    fn lq_matches_discrete_optimum_and_closed_form() {
        let (tr, r) = lq_solve(200, 10.0);
        assert!(r.converged, "{:?}", r.failure);
        assert!(r.max_violation <= 1e-7);
        let oracle = discrete_lq_oracle(200, 10.0);
        assert!((r.objective - oracle).abs() <= 1e-6 * oracle, "{} vs {oracle}", r.objective);

        let lq = registry::lq_scalar_data();
        let bvp = LqBvp::solve(&lq, &v(&[0.0]), &v(&[1.0]), 10.0).unwrap();
        let exact = bvp.cost(20000);
        let (_, fine) = lq_solve(400, 10.0);
        assert!((fine.objective - exact).abs() <= 1e-4 * exact, "{} vs {exact}", fine.objective);

        // interior costates against the closed form (unit convention)
        let traj = r.trajectory(&tr).unwrap();
        for i in 5..traj.len() - 5 {
            let (_, lambda, _) = bvp.point(traj.times[i]);
            let unit = 2.0 * lambda[0];
            assert!((traj.costates[i][0] - unit).abs() <= 5e-3 * (1.0 + unit.abs()));
        }
    }

    #[test]
    fn second_order_in_h() {
        let lq = registry::lq_scalar_data();
        let bvp = LqBvp::solve(&lq, &v(&[0.0]), &v(&[1.0]), 10.0).unwrap();
        let err = |n: usize| {
            let (tr, r) = lq_solve(n, 10.0);
            let traj = r.trajectory(&tr).unwrap();
            (0..traj.len()).map(|i| (traj.states[i][0] - bvp.point(traj.times[i]).0[0]).abs()).fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(100), err(200), err(400));
        for ratio in [e1 / e2, e2 / e3] {
            assert!((3.2..=4.8).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn periodic_lq_stays_at_turnpike() {
        let p = registry::lq_scalar().with_boundary(BoundarySpec::Periodic).unwrap();
        let tr = transcribe(&p, 5.0, 50).unwrap();
        let init = DVector::from_fn(tr.n_vars(), |i, _| 0.2 * (i as f64).sin());
        let r = solve_al(&tr, &init, &AlConfig::default()).unwrap();
        assert!(r.converged, "{:?}", r.failure);
        for i in 0..tr.nodes() {
            assert!((tr.node(&r.w, i).0[0] - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn improves_on_feasible_start() {
        // x = u = 0 satisfies the periodic defects exactly
        let p = registry::lq_scalar().with_boundary(BoundarySpec::Periodic).unwrap();
        let tr = transcribe(&p, 5.0, 50).unwrap();
        let init = DVector::zeros(tr.n_vars());
        assert_eq!(tr.constraints(&init).unwrap().amax(), 0.0);
        let r = solve_al(&tr, &init, &AlConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.objective < r.initial_objective);
        // objective error is of order Σ|μ|·violation
        assert!((r.objective - 2.5).abs() < 1e-5);
    }

    #[test]
    fn control_box_is_respected() {
        let omega = ControlBounds { lo: vec![-0.2], hi: vec![0.2] };
        let p = ControlProblem::parse(1, 1, &["-x1 + u1"], "(x1 - 1)^2 + u1^2", BoundarySpec::FixedFree { x0: v(&[0.0]) }, Some(omega))
            .unwrap();
        let tr = transcribe(&p, 3.0, 60).unwrap();
        let r = solve_al(&tr, &DVector::zeros(tr.n_vars()), &AlConfig::default()).unwrap();
        assert!(r.converged, "{:?}", r.failure);
        let us: Vec<f64> = (0..tr.nodes()).map(|i| tr.node(&r.w, i).1[0]).collect();
        assert!(us.iter().all(|u| (-0.2..=0.2).contains(u)));
        assert!(us.contains(&0.2));
    }
}
