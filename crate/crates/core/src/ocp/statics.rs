use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ControlProblem, OcpError};
use crate::exec::{map_indexed, Execution};
use crate::linalg::{self, MAX_CONDITION};

/// Residual norm below which a KKT point is accepted.
pub const KKT_TOL: f64 = 1e-9;
const MAX_ITERATIONS: usize = 100;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1.0 / 1048576.0;
const DEDUP_DISTANCE: f64 = 1e-6;
const SECOND_ORDER_TOL: f64 = -1e-8;

/// Steady state (x̄, ū) with multiplier λ̄ (λ̄⁰ = −1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticExtremal {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub lambda: DVector<f64>,
    pub lambda0: f64,
    pub kkt_residual_norm: f64,
    pub f0_value: f64,
    pub iterations: usize,
    /// Smallest eigenvalue of the Hessian of f⁰ − ⟨λ, f⟩ restricted to ker df.
    pub reduced_hessian_min: f64,
}

impl StaticExtremal {
    /// Stacked (x, u, λ).
    pub fn stacked(&self) -> DVector<f64> {
        let (n, m) = (self.x.len(), self.u.len());
        let mut y = DVector::zeros(2 * n + m);
        y.rows_mut(0, n).copy_from(&self.x);
        y.rows_mut(n, m).copy_from(&self.u);
        y.rows_mut(n + m, n).copy_from(&self.lambda);
        y
    }

    pub fn is_local_minimizer(&self) -> bool {
        self.reduced_hessian_min >= SECOND_ORDER_TOL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticGuess {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub lambda: DVector<f64>,
}

impl StaticGuess {
    pub fn new(x: &[f64], u: &[f64], lambda: &[f64]) -> Self {
        Self {
            x: DVector::from_column_slice(x),
            u: DVector::from_column_slice(u),
            lambda: DVector::from_column_slice(lambda),
        }
    }
}

fn split_y(y: &DVector<f64>, n: usize, m: usize) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    (y.rows(0, n).into_owned(), y.rows(n, m).into_owned(), y.rows(n + m, n).into_owned())
}

/// Stacked [f(x,u); ∂H/∂x; ∂H/∂u] at λ⁰ = −1.
pub fn kkt_residual(
    p: &ControlProblem,
    x: &DVector<f64>,
    u: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<DVector<f64>, OcpError> {
    let (n, m) = (p.n(), p.m());
    if x.len() != n || u.len() != m || lambda.len() != n {
        return Err(OcpError::Dimension("kkt_residual argument lengths".into()));
    }
    let mut r = DVector::zeros(2 * n + m);
    r.rows_mut(0, n).copy_from(&p.f(x, u)?);
    r.rows_mut(n, n + m).copy_from(&p.hamiltonian_gradient(x, lambda, -1.0, u)?);
    Ok(r)
}

/// Jacobian of the KKT residual over (x, u, λ): [[F, 0], [H_zz, Fᵀ]].
fn kkt_jacobian(p: &ControlProblem, y: &DVector<f64>) -> Result<DMatrix<f64>, OcpError> {
    let (n, m) = (p.n(), p.m());
    let (x, u, lambda) = split_y(y, n, m);
    let f = p.f_jacobian(&x, &u)?;
    let hzz = p.hamiltonian_hessian(&x, &lambda, -1.0, &u)?;
    let k = n + m;
    let mut j = DMatrix::zeros(2 * n + m, 2 * n + m);
    j.view_mut((0, 0), (n, k)).copy_from(&f);
    j.view_mut((n, 0), (k, k)).copy_from(&hzz);
    j.view_mut((n, k), (k, n)).copy_from(&f.transpose());
    Ok(j)
}

fn residual_of(p: &ControlProblem, y: &DVector<f64>) -> Result<DVector<f64>, OcpError> {
    let (x, u, l) = split_y(y, p.n(), p.m());
    kkt_residual(p, &x, &u, &l)
}

/// Smallest eigenvalue of Zᵀ(−H_zz)Z with Z an orthonormal basis of ker [f_x f_u].
pub fn reduced_hessian_min_eigenvalue(
    p: &ControlProblem,
    x: &DVector<f64>,
    u: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<f64, OcpError> {
    let f = p.f_jacobian(x, u)?;
    let k = f.ncols();
    let null_dim = k - linalg::numerical_rank(&f, 1e-10);
    if null_dim == 0 {
        return Ok(f64::INFINITY);
    }
    let eig = SymmetricEigen::new(f.transpose() * &f);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut z = DMatrix::zeros(k, null_dim);
    for (c, &i) in order.iter().take(null_dim).enumerate() {
        z.set_column(c, &eig.eigenvectors.column(i));
    }
    let hess = -p.hamiltonian_hessian(x, lambda, -1.0, u)?;
    Ok(linalg::min_symmetric_eigenvalue(&(z.transpose() * hess * z)))
}

/// Damped Newton on the KKT system from `guess`.
pub fn static_newton(p: &ControlProblem, guess: &StaticGuess) -> Result<StaticExtremal, OcpError> {
    let (n, m) = (p.n(), p.m());
    if guess.x.len() != n || guess.u.len() != m || guess.lambda.len() != n {
        return Err(OcpError::Dimension("guess lengths must be (n, m, n)".into()));
    }
    let mut y = DVector::zeros(2 * n + m);
    y.rows_mut(0, n).copy_from(&guess.x);
    y.rows_mut(n, m).copy_from(&guess.u);
    y.rows_mut(n + m, n).copy_from(&guess.lambda);
    let mut r = residual_of(p, &y)?;
    let mut norm = r.norm();
    let mut iterations = 0;
    while norm > KKT_TOL {
        if iterations == MAX_ITERATIONS {
            return Err(OcpError::NoConvergence { iterations, residual: norm });
        }
        iterations += 1;
        let j = kkt_jacobian(p, &y)?;
        let step = linalg::solve_checked(&j, &(-&r), MAX_CONDITION)
            .map_err(|_| OcpError::SingularJacobian { condition: linalg::condition_number(&j) })?;
        let mut alpha = 1.0;
        loop {
            let trial = &y + &step * alpha;
            if let Ok(rt) = residual_of(p, &trial) {
                let nt = rt.norm();
                if nt <= (1.0 - ARMIJO * alpha) * norm {
                    y = trial;
                    r = rt;
                    norm = nt;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < MIN_STEP {
                return Err(OcpError::NoConvergence { iterations, residual: norm });
            }
        }
    }
    let (x, u, lambda) = split_y(&y, n, m);
    if let Some(j) = p.omega().first_non_interior(&u) {
        return Err(OcpError::ControlOnBoundary { index: j + 1, value: u[j] });
    }
    let f0_value = p.f0(&x, &u)?;
    let reduced_hessian_min = reduced_hessian_min_eigenvalue(p, &x, &u, &lambda)?;
    Ok(StaticExtremal {
        x,
        u,
        lambda,
        lambda0: -1.0,
        kkt_residual_norm: norm,
        f0_value,
        iterations,
        reduced_hessian_min,
    })
}

/// Axis-aligned region of states sampled by multistart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SearchBox {
    pub fn cube(n: usize, half_width: f64) -> Self {
        Self { lo: vec![-half_width; n], hi: vec![half_width; n] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistartResult {
    /// Accepted local minimizers, ascending by (f⁰, x).
    pub extremals: Vec<StaticExtremal>,
    /// Converged KKT points that fail the second-order test.
    pub non_minimizers: Vec<StaticExtremal>,
    pub starts: usize,
    pub converged: usize,
    pub boundary_rejected: usize,
}

fn order(a: &StaticExtremal, b: &StaticExtremal) -> std::cmp::Ordering {
    a.f0_value.total_cmp(&b.f0_value).then_with(|| {
        a.x.iter()
            .zip(b.x.iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    })
}

fn sort_dedup(mut list: Vec<StaticExtremal>) -> Vec<StaticExtremal> {
    list.sort_by(order);
    let mut kept: Vec<StaticExtremal> = Vec::new();
    for e in list {
        let y = e.stacked();
        if kept.iter().all(|k| (k.stacked() - &y).norm() > DEDUP_DISTANCE) {
            kept.push(e);
        }
    }
    kept
}

/// `starts` seeded uniform starts in `region` (u = 0 or the box centre, λ = 0).
pub fn static_multistart(
    p: &ControlProblem,
    region: &SearchBox,
    starts: usize,
    seed: u64,
    exec: Execution,
) -> Result<MultistartResult, OcpError> {
    let (n, m) = (p.n(), p.m());
    if region.lo.len() != n || region.hi.len() != n {
        return Err(OcpError::Dimension("search box must have length n".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u0 = DVector::from_fn(m, |j, _| {
        let (lo, hi) = (p.omega().lo[j], p.omega().hi[j]);
        if lo < 0.0 && hi > 0.0 {
            0.0
        } else if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if lo.is_finite() {
            lo + 1.0
        } else {
            hi - 1.0
        }
    });
    let guesses: Vec<StaticGuess> = (0..starts)
        .map(|_| StaticGuess {
            x: DVector::from_fn(n, |i, _| {
                if region.hi[i] > region.lo[i] {
                    rng.random_range(region.lo[i]..region.hi[i])
                } else {
                    region.lo[i]
                }
            }),
            u: u0.clone(),
            lambda: DVector::zeros(n),
        })
        .collect();
    let outcomes = map_indexed(starts, exec, |k| static_newton(p, &guesses[k]));
    let mut minimizers = Vec::new();
    let mut others = Vec::new();
    let mut boundary_rejected = 0;
    let mut converged = 0;
    for outcome in outcomes {
        match outcome {
            Ok(e) => {
                converged += 1;
                if e.is_local_minimizer() {
                    minimizers.push(e);
                } else {
                    others.push(e);
                }
            }
            Err(OcpError::ControlOnBoundary { .. }) => boundary_rejected += 1,
            Err(_) => {}
        }
    }
    Ok(MultistartResult {
        extremals: sort_dedup(minimizers),
        non_minimizers: sort_dedup(others),
        starts,
        converged,
        boundary_rejected,
    })
}
