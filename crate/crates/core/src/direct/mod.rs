//! Direct transcription: Crank–Nicolson defects, trapezoidal cost and an
//! augmented Lagrangian solver.
//!
//! The decision vector is node-major, v_i = (x_i, u_i) for i = 0..=N.
//! Constraint rows are the nN defects
//! c_i = x_{i+1} − x_i − (h/2)(f(v_i) + f(v_{i+1})) followed by the
//! boundary rows. With L = J + μ·c the defect multipliers approximate the
//! costate in the λ⁰ = −1 convention at interval midpoints, so node values
//! are averages of neighbouring multipliers (factor 1).

mod al;
mod blocktri;

pub use al::{solve_al, solve_al_from, AlConfig, NlpResult};
pub use blocktri::BlockTridiagonal;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::ocp::{BoundarySpec, ControlProblem, OcpError, StaticExtremal};
use crate::trajectory::{CostateScale, Trajectory, TrajectoryMeta};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DirectError {
    #[error(transparent)]
    Ocp(#[from] OcpError),
    #[error("need at least 2 intervals, got {0}")]
    TooFewIntervals(usize),
    #[error("horizon must be positive, got {0}")]
    Horizon(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("inner Newton failed at outer iteration {outer} (projected gradient {gradient:.3e})")]
    InnerFailure { outer: usize, gradient: f64 },
    #[error("iteration cap reached (violation {violation:.3e}, stationarity {stationarity:.3e})")]
    IterationCap { violation: f64, stationarity: f64 },
}

/// Intervals used when none are requested: 20 per unit time.
pub fn default_intervals(horizon: f64) -> usize {
    ((20.0 * horizon).ceil() as usize).max(2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcription {
    problem: ControlProblem,
    horizon: f64,
    intervals: usize,
    h: f64,
}

/// Derivative data of f and f⁰ at one node.
pub(crate) struct NodeData {
    pub f_jac: DMatrix<f64>,
    pub f_hess: Vec<DMatrix<f64>>,
    pub f0_grad: DVector<f64>,
    pub f0_hess: DMatrix<f64>,
}

pub fn transcribe(p: &ControlProblem, horizon: f64, intervals: usize) -> Result<Transcription, DirectError> {
    if intervals < 2 {
        return Err(DirectError::TooFewIntervals(intervals));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(DirectError::Horizon(horizon));
    }
    Ok(Transcription { problem: p.clone(), horizon, intervals, h: horizon / intervals as f64 })
}

impl Transcription {
    pub fn problem(&self) -> &ControlProblem {
        &self.problem
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    /// Size of one node block, n + m.
    pub fn block(&self) -> usize {
        self.problem.n() + self.problem.m()
    }

    pub fn nodes(&self) -> usize {
        self.intervals + 1
    }

    pub fn n_vars(&self) -> usize {
        self.nodes() * self.block()
    }

    pub fn n_defect_rows(&self) -> usize {
        self.problem.n() * self.intervals
    }

    pub fn n_boundary_rows(&self) -> usize {
        let n = self.problem.n();
        match self.problem.boundary() {
            BoundarySpec::FixedFixed { .. } => 2 * n,
            BoundarySpec::FixedFree { .. } | BoundarySpec::Periodic => n,
            BoundarySpec::FixedConstrained { g, .. } => n + g.len(),
        }
    }

    pub fn n_constraints(&self) -> usize {
        self.n_defect_rows() + self.n_boundary_rows()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.nodes()).map(|i| if i == self.intervals { self.horizon } else { i as f64 * self.h }).collect()
    }

    /// Node closest to time t.
    pub fn nearest_node(&self, t: f64) -> usize {
        ((t / self.h).round().max(0.0) as usize).min(self.intervals)
    }

    /// Trapezoid weight of node i.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.intervals {
            0.5 * self.h
        } else {
            self.h
        }
    }

    pub fn node(&self, w: &DVector<f64>, i: usize) -> (DVector<f64>, DVector<f64>) {
        let (n, m, s) = (self.problem.n(), self.problem.m(), self.block());
        (w.rows(i * s, n).into_owned(), w.rows(i * s + n, m).into_owned())
    }

    fn check(&self, w: &DVector<f64>) -> Result<(), DirectError> {
        if w.len() != self.n_vars() {
            return Err(DirectError::Dimension(format!("decision vector has {} entries, expected {}", w.len(), self.n_vars())));
        }
        Ok(())
    }

    pub fn objective(&self, w: &DVector<f64>) -> Result<f64, DirectError> {
        self.check(w)?;
        let mut j = 0.0;
        for i in 0..self.nodes() {
            let (x, u) = self.node(w, i);
            j += self.weight(i) * self.problem.f0(&x, &u)?;
        }
        Ok(j)
    }

    fn values(&self, w: &DVector<f64>) -> Result<(Vec<DVector<f64>>, f64), DirectError> {
        let mut fs = Vec::with_capacity(self.nodes());
        let mut j = 0.0;
        for i in 0..self.nodes() {
            let (x, u) = self.node(w, i);
            fs.push(self.problem.f(&x, &u)?);
            j += self.weight(i) * self.problem.f0(&x, &u)?;
        }
        Ok((fs, j))
    }

    pub(crate) fn node_data(&self, w: &DVector<f64>) -> Result<Vec<NodeData>, DirectError> {
        let p = &self.problem;
        (0..self.nodes())
            .map(|i| {
                let (x, u) = self.node(w, i);
                Ok(NodeData {
                    f_jac: p.f_jacobian(&x, &u)?,
                    f_hess: (0..p.n()).map(|k| p.f_hessian(k, &x, &u)).collect::<Result<_, _>>()?,
                    f0_grad: p.f0_gradient(&x, &u)?,
                    f0_hess: p.f0_hessian(&x, &u)?,
                })
            })
            .collect()
    }

    fn assemble_constraints(&self, w: &DVector<f64>, fs: &[DVector<f64>]) -> Result<DVector<f64>, DirectError> {
        let n = self.problem.n();
        let nd = self.n_defect_rows();
        let mut c = DVector::zeros(self.n_constraints());
        for i in 0..self.intervals {
            let (xa, _) = self.node(w, i);
            let (xb, _) = self.node(w, i + 1);
            let d = &xb - &xa - (&fs[i] + &fs[i + 1]) * (0.5 * self.h);
            c.rows_mut(i * n, n).copy_from(&d);
        }
        let (x_first, _) = self.node(w, 0);
        let (x_last, _) = self.node(w, self.intervals);
        match self.problem.boundary() {
            BoundarySpec::FixedFixed { x0, x1 } => {
                c.rows_mut(nd, n).copy_from(&(&x_first - x0));
                c.rows_mut(nd + n, n).copy_from(&(&x_last - x1));
            }
            BoundarySpec::FixedFree { x0 } => c.rows_mut(nd, n).copy_from(&(&x_first - x0)),
            BoundarySpec::FixedConstrained { x0, g } => {
                c.rows_mut(nd, n).copy_from(&(&x_first - x0));
                c.rows_mut(nd + n, g.len()).copy_from(&self.problem.g(&x_last)?);
            }
            BoundarySpec::Periodic => c.rows_mut(nd, n).copy_from(&(&x_first - &x_last)),
        }
        Ok(c)
    }

    /// Defect rows followed by boundary rows.
    pub fn constraints(&self, w: &DVector<f64>) -> Result<DVector<f64>, DirectError> {
        self.check(w)?;
        let (fs, _) = self.values(w)?;
        self.assemble_constraints(w, &fs)
    }

    pub(crate) fn objective_and_constraints(&self, w: &DVector<f64>) -> Result<(f64, DVector<f64>), DirectError> {
        let (fs, j) = self.values(w)?;
        Ok((j, self.assemble_constraints(w, &fs)?))
    }

    /// Node costates from defect multipliers.
    pub fn costates_from_multipliers(&self, multipliers: &DVector<f64>) -> Vec<DVector<f64>> {
        let n = self.problem.n();
        let mu = |i: usize| multipliers.rows(i * n, n).into_owned();
        (0..self.nodes())
            .map(|j| {
                if j == 0 {
                    mu(0)
                } else if j == self.intervals {
                    mu(self.intervals - 1)
                } else {
                    (mu(j - 1) + mu(j)) * 0.5
                }
            })
            .collect()
    }

    /// Sampled trajectory; costates are zero when no multipliers are given.
    pub fn trajectory(&self, w: &DVector<f64>, multipliers: Option<&DVector<f64>>) -> Result<Trajectory, DirectError> {
        self.check(w)?;
        let (states, controls): (Vec<_>, Vec<_>) = (0..self.nodes()).map(|i| self.node(w, i)).unzip();
        let costates = match multipliers {
            Some(mu) => self.costates_from_multipliers(mu),
            None => vec![DVector::zeros(self.problem.n()); self.nodes()],
        };
        let mut meta = TrajectoryMeta::new("direct", CostateScale::Unit);
        meta.cost = self.objective(w)?;
        Trajectory::new(self.times(), states, costates, controls, meta)
            .map_err(|e| DirectError::Dimension(e.to_string()))
    }

    pub fn pack(&self, states: &[DVector<f64>], controls: &[DVector<f64>]) -> DVector<f64> {
        let (n, m, s) = (self.problem.n(), self.problem.m(), self.block());
        let mut w = DVector::zeros(self.n_vars());
        for i in 0..self.nodes() {
            w.rows_mut(i * s, n).copy_from(&states[i]);
            w.rows_mut(i * s + n, m).copy_from(&controls[i]);
        }
        w
    }
}

/// Constant turnpike values with linear ramps from the boundary data over
/// the first and last max(1, N/20) nodes.
pub fn init_turnpike(tr: &Transcription, e: &StaticExtremal) -> DVector<f64> {
    let nodes = tr.nodes();
    let mut states = vec![e.x.clone(); nodes];
    let controls = vec![e.u.clone(); nodes];
    let ramp = (tr.intervals() / 20).max(1);
    let p = tr.problem();
    if let Some(x0) = p.boundary().initial_state() {
        for (i, s) in states.iter_mut().enumerate().take(ramp) {
            let a = i as f64 / ramp as f64;
            *s = x0 * (1.0 - a) + &e.x * a;
        }
    }
    if let Some(x1) = p.boundary().terminal_state() {
        for i in 0..ramp {
            let a = i as f64 / ramp as f64;
            states[nodes - 1 - i] = x1 * (1.0 - a) + &e.x * a;
        }
    }
    tr.pack(&states, &controls)
}

/// Defect multipliers equal to the static costate λ̄, boundary rows zero.
pub fn init_turnpike_multipliers(tr: &Transcription, e: &StaticExtremal) -> DVector<f64> {
    let n = tr.problem().n();
    let mut mu = DVector::zeros(tr.n_constraints());
    for i in 0..tr.intervals() {
        mu.rows_mut(i * n, n).copy_from(&e.lambda);
    }
    mu
}

/// Zero-control orbit x = R sin t, y = R cos t of a planar problem.
pub fn init_orbit(tr: &Transcription, radius: f64) -> Result<DVector<f64>, DirectError> {
    if tr.problem().n() != 2 {
        return Err(DirectError::Dimension("orbit initialization needs n = 2".into()));
    }
    let states: Vec<_> = tr.times().iter().map(|t| DVector::from_vec(vec![radius * t.sin(), radius * t.cos()])).collect();
    let controls = vec![DVector::zeros(tr.problem().m()); tr.nodes()];
    Ok(tr.pack(&states, &controls))
}
