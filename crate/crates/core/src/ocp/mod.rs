//! Nonlinear optimal control problems, their Hamiltonian, the static
//! (steady-state) problem and the checks behind the local turnpike estimate.
//!
//! The cost multiplier is normalized to λ⁰ = −1 throughout.

mod assumptions;
mod statics;

pub use assumptions::{check_assumptions, linearize, AssumptionReport, LinearizationData};
pub use statics::{
    kkt_residual, reduced_hessian_min_eigenvalue, static_multistart, static_newton, MultistartResult, SearchBox,
    StaticExtremal, StaticGuess, KKT_TOL,
};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::expr::{EvalError, Expression, ParseError, Var, VectorField};
use crate::linalg::LinalgError;
use crate::lq::LqProblem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcpError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("control bounds for u{index} are not ordered (lo {lo} > hi {hi})")]
    Bounds { index: usize, lo: f64, hi: f64 },
    #[error("terminal constraint g must depend on the state only")]
    ConstraintUsesControl,
    #[error("Jacobian is numerically singular (condition number {condition:.3e})")]
    SingularJacobian { condition: f64 },
    #[error("Newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("converged point has control u{index} = {value} on the boundary of the control set")]
    ControlOnBoundary { index: usize, value: f64 },
    #[error("U = -H_uu is singular (condition number {condition:.3e})")]
    SingularU { condition: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Terminal/initial conditions R(x(0), x(T)) = 0.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundarySpec {
    FixedFixed { x0: DVector<f64>, x1: DVector<f64> },
    FixedFree { x0: DVector<f64> },
    /// x(0) = x0 and g(x(T)) = 0 with g: ℝⁿ → ℝᵖ.
    FixedConstrained { x0: DVector<f64>, g: VectorField },
    Periodic,
}

impl BoundarySpec {
    pub fn initial_state(&self) -> Option<&DVector<f64>> {
        match self {
            BoundarySpec::FixedFixed { x0, .. }
            | BoundarySpec::FixedFree { x0 }
            | BoundarySpec::FixedConstrained { x0, .. } => Some(x0),
            BoundarySpec::Periodic => None,
        }
    }

    pub fn terminal_state(&self) -> Option<&DVector<f64>> {
        match self {
            BoundarySpec::FixedFixed { x1, .. } => Some(x1),
            _ => None,
        }
    }

    /// Number of terminal multipliers γ appended to shooting unknowns.
    pub fn multiplier_count(&self) -> usize {
        match self {
            BoundarySpec::FixedConstrained { g, .. } => g.len(),
            _ => 0,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BoundarySpec::FixedFixed { .. } => "fixed_fixed",
            BoundarySpec::FixedFree { .. } => "fixed_free",
            BoundarySpec::FixedConstrained { .. } => "fixed_constrained",
            BoundarySpec::Periodic => "periodic",
        }
    }

    fn validate(&self, n: usize) -> Result<(), OcpError> {
        let check = |v: &DVector<f64>, what: &str| {
            if v.len() == n {
                Ok(())
            } else {
                Err(OcpError::Dimension(format!("{what} has length {}, expected {n}", v.len())))
            }
        };
        match self {
            BoundarySpec::FixedFixed { x0, x1 } => {
                check(x0, "x0")?;
                check(x1, "x1")
            }
            BoundarySpec::FixedFree { x0 } => check(x0, "x0"),
            BoundarySpec::FixedConstrained { x0, g } => {
                check(x0, "x0")?;
                if g.is_empty() || g.len() > n {
                    return Err(OcpError::Dimension(format!("g has {} components, expected 1..={n}", g.len())));
                }
                if g.dims().0 != n {
                    return Err(OcpError::Dimension("g declared with the wrong state dimension".into()));
                }
                if g.components().iter().any(|c| c.node().var_extent().1 > 0) {
                    return Err(OcpError::ConstraintUsesControl);
                }
                Ok(())
            }
            BoundarySpec::Periodic => Ok(()),
        }
    }
}

/// Componentwise control box Ω = Π [lo_j, hi_j]; infinite ends allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ControlBounds {
    pub fn unbounded(m: usize) -> Self {
        Self { lo: vec![f64::NEG_INFINITY; m], hi: vec![f64::INFINITY; m] }
    }

    pub fn is_unbounded(&self) -> bool {
        self.lo.iter().all(|v| v.is_infinite()) && self.hi.iter().all(|v| v.is_infinite())
    }

    pub fn clamp(&self, j: usize, v: f64) -> f64 {
        v.max(self.lo[j]).min(self.hi[j])
    }

    /// Index of the first component not strictly inside the box.
    pub fn first_non_interior(&self, u: &DVector<f64>) -> Option<usize> {
        (0..u.len()).find(|&j| !(u[j] > self.lo[j] && u[j] < self.hi[j]))
    }
}

/// Symbolic first and second derivatives of f (components 0..n) and f⁰
/// (component n) over the stacked variables (x, u).
#[derive(Debug, Clone, PartialEq)]
struct Derivatives {
    grad: Vec<Vec<Expression>>,
    hess: Vec<Vec<Vec<Expression>>>,
    g_grad: Vec<Vec<Expression>>,
}

impl Derivatives {
    fn build(f: &VectorField, f0: &Expression, g: Option<&VectorField>, n: usize, m: usize) -> Self {
        let vars: Vec<Var> = (0..n + m).map(|k| Var::from_stacked(k, n)).collect();
        let comps: Vec<&Expression> = f.components().iter().chain(std::iter::once(f0)).collect();
        let mut grad = Vec::with_capacity(n + 1);
        let mut hess = Vec::with_capacity(n + 1);
        for e in comps {
            let first: Vec<Expression> = vars.iter().map(|&v| e.differentiate(v)).collect();
            let second: Vec<Vec<Expression>> = first
                .iter()
                .map(|d| vars.iter().map(|&v| d.differentiate(v)).collect())
                .collect();
            grad.push(first);
            hess.push(second);
        }
        let g_grad = g
            .map(|g| {
                g.components()
                    .iter()
                    .map(|c| (0..n).map(|i| c.differentiate(Var::State(i))).collect())
                    .collect()
            })
            .unwrap_or_default();
        Self { grad, hess, g_grad }
    }
}

/// min ∫₀ᵀ f⁰(x, u) dt subject to ẋ = f(x, u), u ∈ Ω and the boundary conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblem {
    n: usize,
    m: usize,
    f: VectorField,
    f0: Expression,
    boundary: BoundarySpec,
    omega: ControlBounds,
    derivs: Derivatives,
}

impl ControlProblem {
    pub fn new(
        f: VectorField,
        f0: Expression,
        boundary: BoundarySpec,
        omega: Option<ControlBounds>,
    ) -> Result<Self, OcpError> {
        let (n, m) = f.dims();
        if f.len() != n {
            return Err(OcpError::Dimension(format!("f has {} components, expected n = {n}", f.len())));
        }
        if f0.dims() != (n, m) {
            return Err(OcpError::Dimension("f0 declared with different (n, m)".into()));
        }
        boundary.validate(n)?;
        let omega = omega.unwrap_or_else(|| ControlBounds::unbounded(m));
        if omega.lo.len() != m || omega.hi.len() != m {
            return Err(OcpError::Dimension("control bounds must have length m".into()));
        }
        for j in 0..m {
            if !(omega.lo[j] <= omega.hi[j]) {
                return Err(OcpError::Bounds { index: j + 1, lo: omega.lo[j], hi: omega.hi[j] });
            }
        }
        let g = match &boundary {
            BoundarySpec::FixedConstrained { g, .. } => Some(g),
            _ => None,
        };
        let derivs = Derivatives::build(&f, &f0, g, n, m);
        Ok(Self { n, m, f, f0, boundary, omega, derivs })
    }

    /// Builds a problem from expression strings.
    pub fn parse<S: AsRef<str>>(
        n: usize,
        m: usize,
        f: &[S],
        f0: &str,
        boundary: BoundarySpec,
        omega: Option<ControlBounds>,
    ) -> Result<Self, OcpError> {
        let f = VectorField::parse(f, n, m)?;
        let f0 = Expression::parse(f0, n, m)?;
        Self::new(f, f0, boundary, omega)
    }

    /// The LQ problem written as a nonlinear problem (cost without the 1/2).
    pub fn from_lq(p: &LqProblem, boundary: BoundarySpec) -> Result<Self, OcpError> {
        let (n, m) = (p.n(), p.m());
        let lit = |v: f64| format!("({v:?})");
        let f: Vec<String> = (0..n)
            .map(|i| {
                let mut terms: Vec<String> = Vec::new();
                for j in 0..n {
                    if p.a()[(i, j)] != 0.0 {
                        terms.push(format!("{}*x{}", lit(p.a()[(i, j)]), j + 1));
                    }
                }
                for k in 0..m {
                    if p.b()[(i, k)] != 0.0 {
                        terms.push(format!("{}*u{}", lit(p.b()[(i, k)]), k + 1));
                    }
                }
                if terms.is_empty() {
                    "0".to_string()
                } else {
                    terms.join(" + ")
                }
            })
            .collect();
        let quad = |mat: &DMatrix<f64>, prefix: char, target: &DVector<f64>| {
            let d = |i: usize| format!("({prefix}{} - {})", i + 1, lit(target[i]));
            let mut terms = Vec::new();
            for i in 0..mat.nrows() {
                for j in 0..mat.ncols() {
                    if mat[(i, j)] != 0.0 {
                        terms.push(format!("{}*{}*{}", lit(mat[(i, j)]), d(i), d(j)));
                    }
                }
            }
            terms
        };
        let mut cost = quad(p.q(), 'x', p.xd());
        cost.extend(quad(p.u(), 'u', p.ud()));
        Self::parse(n, m, &f, &cost.join(" + "), boundary, None)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn dynamics(&self) -> &VectorField {
        &self.f
    }
    pub fn running_cost(&self) -> &Expression {
        &self.f0
    }
    pub fn boundary(&self) -> &BoundarySpec {
        &self.boundary
    }
    pub fn omega(&self) -> &ControlBounds {
        &self.omega
    }

    pub fn with_boundary(&self, boundary: BoundarySpec) -> Result<Self, OcpError> {
        Self::new(self.f.clone(), self.f0.clone(), boundary, Some(self.omega.clone()))
    }

    pub fn f(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, OcpError> {
        Ok(DVector::from_vec(self.f.eval(x.as_slice(), u.as_slice())?))
    }

    pub fn f0(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64, OcpError> {
        Ok(self.f0.eval(x.as_slice(), u.as_slice())?)
    }

    fn grad_rows(&self, comp: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<Vec<f64>, OcpError> {
        self.derivs.grad[comp]
            .iter()
            .map(|e| e.eval(x.as_slice(), u.as_slice()).map_err(OcpError::from))
            .collect()
    }

    /// Jacobian of f over (x, u): n × (n+m).
    pub fn f_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>, OcpError> {
        let (n, m) = (self.n, self.m);
        let mut j = DMatrix::zeros(n, n + m);
        for i in 0..n {
            let row = self.grad_rows(i, x, u)?;
            for (k, v) in row.into_iter().enumerate() {
                j[(i, k)] = v;
            }
        }
        Ok(j)
    }

    pub fn f_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>, OcpError> {
        Ok(self.f_jacobian(x, u)?.columns(0, self.n).into_owned())
    }

    pub fn f_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>, OcpError> {
        Ok(self.f_jacobian(x, u)?.columns(self.n, self.m).into_owned())
    }

    /// Gradient of f⁰ over (x, u).
    pub fn f0_gradient(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, OcpError> {
        Ok(DVector::from_vec(self.grad_rows(self.n, x, u)?))
    }

    /// Hessian over (x, u) of component `comp` (f_i for comp < n, f⁰ for comp = n).
    fn component_hessian(&self, comp: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>, OcpError> {
        let k = self.n + self.m;
        let mut h = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                h[(a, b)] = self.derivs.hess[comp][a][b].eval(x.as_slice(), u.as_slice())?;
            }
        }
        Ok(h)
    }

    pub fn f_hessian(&self, i: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>, OcpError> {
        self.component_hessian(i, x, u)
    }

    pub fn f0_hessian(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>, OcpError> {
        self.component_hessian(self.n, x, u)
    }

    /// H(x, λ, λ⁰, u) = ⟨λ, f(x, u)⟩ + λ⁰ f⁰(x, u).
    pub fn hamiltonian(
        &self,
        x: &DVector<f64>,
        lambda: &DVector<f64>,
        lambda0: f64,
        u: &DVector<f64>,
    ) -> Result<f64, OcpError> {
        Ok(lambda.dot(&self.f(x, u)?) + lambda0 * self.f0(x, u)?)
    }

    /// Gradient of H over (x, u).
    pub fn hamiltonian_gradient(
        &self,
        x: &DVector<f64>,
        lambda: &DVector<f64>,
        lambda0: f64,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, OcpError> {
        Ok(self.f_jacobian(x, u)?.transpose() * lambda + self.f0_gradient(x, u)? * lambda0)
    }

    /// Hessian of H over (x, u).
    pub fn hamiltonian_hessian(
        &self,
        x: &DVector<f64>,
        lambda: &DVector<f64>,
        lambda0: f64,
        u: &DVector<f64>,
    ) -> Result<DMatrix<f64>, OcpError> {
        let mut h = self.f0_hessian(x, u)? * lambda0;
        for i in 0..self.n {
            if lambda[i] != 0.0 {
                h += self.f_hessian(i, x, u)? * lambda[i];
            }
        }
        Ok(h)
    }

    /// Entries `start..start+len` of the gradient of H over (x, u).
    pub fn hamiltonian_gradient_block(
        &self,
        x: &DVector<f64>,
        lambda: &DVector<f64>,
        lambda0: f64,
        u: &DVector<f64>,
        start: usize,
        len: usize,
    ) -> Result<DVector<f64>, OcpError> {
        let (xs, us) = (x.as_slice(), u.as_slice());
        let mut g = DVector::zeros(len);
        for (k, a) in (start..start + len).enumerate() {
            let mut s = lambda0 * self.derivs.grad[self.n][a].eval(xs, us)?;
            for i in 0..self.n {
                if lambda[i] != 0.0 {
                    s += lambda[i] * self.derivs.grad[i][a].eval(xs, us)?;
                }
            }
            g[k] = s;
        }
        Ok(g)
    }

    /// Diagonal block `start..start+len` of the Hessian of H over (x, u).
    pub fn hamiltonian_hessian_block(
        &self,
        x: &DVector<f64>,
        lambda: &DVector<f64>,
        lambda0: f64,
        u: &DVector<f64>,
        start: usize,
        len: usize,
    ) -> Result<DMatrix<f64>, OcpError> {
        let (xs, us) = (x.as_slice(), u.as_slice());
        let mut h = DMatrix::zeros(len, len);
        for r in 0..len {
            for c in 0..len {
                let (a, b) = (start + r, start + c);
                let mut s = lambda0 * self.derivs.hess[self.n][a][b].eval(xs, us)?;
                for i in 0..self.n {
                    if lambda[i] != 0.0 {
                        s += lambda[i] * self.derivs.hess[i][a][b].eval(xs, us)?;
                    }
                }
                h[(r, c)] = s;
            }
        }
        Ok(h)
    }

    /// Terminal constraint values g(x) (empty unless FixedConstrained).
    pub fn g(&self, x: &DVector<f64>) -> Result<DVector<f64>, OcpError> {
        match &self.boundary {
            BoundarySpec::FixedConstrained { g, .. } => {
                let u = vec![0.0; self.m];
                Ok(DVector::from_vec(g.eval(x.as_slice(), &u)?))
            }
            _ => Ok(DVector::zeros(0)),
        }
    }

    /// Jacobian dg(x), p × n.
    pub fn dg(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, OcpError> {
        let p = self.derivs.g_grad.len();
        let u = vec![0.0; self.m];
        let mut j = DMatrix::zeros(p, self.n);
        for (r, row) in self.derivs.g_grad.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                j[(r, c)] = e.eval(x.as_slice(), &u)?;
            }
        }
        Ok(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn hamiltonian_examples() {
        let p = ControlProblem::parse(1, 1, &["u1"], "u1^2", BoundarySpec::Periodic, None).unwrap();
        let h = p.hamiltonian(&v(&[0.0]), &v(&[1.0]), -1.0, &v(&[0.5])).unwrap();
        assert!((h - 0.25).abs() < 1e-15);
        assert_eq!(p.hamiltonian(&v(&[3.0]), &v(&[0.0]), 0.0, &v(&[-2.0])).unwrap(), 0.0);
    }

    #[test]
    fn exa_hamiltonian_at_global_turnpike() {
        let p = crate::registry::exa();
        let x = v(&[1.98432, 1.98432]);
        let h = p.hamiltonian(&x, &v(&[2.96051, 0.247969]), -1.0, &v(&[0.123985])).unwrap();
        // f vanishes at the printed point up to its rounding
        let f = p.f(&x, &v(&[0.123985])).unwrap();
        let expected = v(&[2.96051, 0.247969]).dot(&f) - 0.98451;
        assert!((h - expected).abs() < 1e-5);
        assert!((h + 0.98451).abs() < 1e-3);
    }

    #[test]
    fn from_lq_matches_data() {
        let lq = LqProblem::scalar(-1.0, 1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let p = ControlProblem::from_lq(&lq, BoundarySpec::Periodic).unwrap();
        let (x, u) = (v(&[0.3]), v(&[-0.7]));
        assert_eq!(p.f(&x, &u).unwrap(), lq.dynamics(&x, &u));
        assert!((p.f0(&x, &u).unwrap() - lq.running_cost(&x, &u)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let r = ControlProblem::parse(1, 1, &["u1"], "u1^2", BoundarySpec::FixedFree { x0: v(&[0.0, 1.0]) }, None);
        assert!(matches!(r, Err(OcpError::Dimension(_))));
        let omega = ControlBounds { lo: vec![1.0], hi: vec![0.0] };
        let r = ControlProblem::parse(1, 1, &["u1"], "u1^2", BoundarySpec::Periodic, Some(omega));
        assert!(matches!(r, Err(OcpError::Bounds { .. })));
        let g = VectorField::parse(&["x1 + u1"], 1, 1).unwrap();
        let r = ControlProblem::parse(1, 1, &["u1"], "u1^2", BoundarySpec::FixedConstrained { x0: v(&[0.0]), g }, None);
        assert!(matches!(r, Err(OcpError::ConstraintUsesControl)));
    }
}
