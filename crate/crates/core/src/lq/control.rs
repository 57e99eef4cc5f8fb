use nalgebra::{Complex, DMatrix, DVector};

use super::LqError;
use crate::linalg::{self, MAX_CONDITION};
use crate::ode;

const RANK_TOL: f64 = 1e-10;

fn check_pair(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(), LqError> {
    if !a.is_square() || b.nrows() != a.nrows() {
        return Err(LqError::Dimension(format!(
            "A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}

/// Numerical rank of [B, AB, …, Aⁿ⁻¹B].
pub fn kalman_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<usize, LqError> {
    check_pair(a, b)?;
    let n = a.nrows();
    let m = b.ncols();
    let mut ctrb = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        ctrb.columns_mut(k * m, m).copy_from(&block);
        block = a * block;
    }
    Ok(linalg::numerical_rank(&ctrb, RANK_TOL))
}

/// Hautus test: rank [A − ξI, B] = n for every eigenvalue ξ of A.
///
/// Equivalent to asking that no eigenvector v of Aᵀ has Bᵀv = 0; the smallest
/// singular value of [A − ξI, B] measures how close such a v comes.
pub fn pbh_test(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<bool, LqError> {
    check_pair(a, b)?;
    let n = a.nrows();
    let m = b.ncols();
    let mut ab = DMatrix::zeros(n, n + m);
    ab.columns_mut(0, n).copy_from(a);
    ab.columns_mut(n, m).copy_from(b);
    let scale = linalg::singular_values(&ab).first().copied().unwrap_or(0.0).max(1.0);
    for xi in linalg::eigenvalues(a)? {
        let pencil = DMatrix::<Complex<f64>>::from_fn(n, n + m, |i, j| {
            let v = Complex::new(ab[(i, j)], 0.0);
            if i == j {
                v - xi
            } else {
                v
            }
        });
        let sigma_min = pencil
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if sigma_min <= RANK_TOL * scale {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Minimum-energy open-loop control u(t) = Bᵀe^{Aᵀ(τ−t)}η.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringControl {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    pub tau: f64,
    pub eta: DVector<f64>,
    pub x_from: DVector<f64>,
    pub gramian: DMatrix<f64>,
    /// ‖x(τ) − x_to‖ after RK4 re-integration of the steered system.
    pub endpoint_error: f64,
}

const GRAMIAN_PANELS: usize = 400;
const CHECK_STEPS: usize = 2000;

impl SteeringControl {
    pub fn control_at(&self, t: f64) -> DVector<f64> {
        let e = linalg::expm(&(self.a.transpose() * (self.tau - t)));
        self.b.transpose() * e * &self.eta
    }

    /// Control values on a uniform grid of `samples` points over [0, τ].
    pub fn sample(&self, samples: usize) -> (Vec<f64>, Vec<DVector<f64>>) {
        let times = crate::trajectory::uniform_grid(self.tau, samples);
        let values = times.iter().map(|&t| self.control_at(t)).collect();
        (times, values)
    }

    /// RK4 endpoint of ẋ = Ax + Bu(t) from `x_from`.
    pub fn simulate_endpoint(&self, steps: usize) -> DVector<f64> {
        ode::rk4(
            |t, x| &self.a * x + &self.b * self.control_at(t),
            0.0,
            &self.x_from,
            self.tau,
            steps,
        )
    }
}

/// G_τ = ∫₀^τ e^{As}BBᵀe^{Aᵀs} ds by composite Simpson.
fn gramian(a: &DMatrix<f64>, b: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let h = tau / GRAMIAN_PANELS as f64;
    let step = linalg::expm(&(a * h));
    let bbt = b * b.transpose();
    let mut e = DMatrix::<f64>::identity(n, n);
    let mut g = DMatrix::zeros(n, n);
    for i in 0..=GRAMIAN_PANELS {
        let w = if i == 0 || i == GRAMIAN_PANELS {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        g += (&e * &bbt * e.transpose()) * w;
        e = &e * &step;
    }
    let g = g * (h / 3.0);
    (&g + g.transpose()) * 0.5
}

pub fn min_energy_steer(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x_from: &DVector<f64>,
    x_to: &DVector<f64>,
    tau: f64,
) -> Result<SteeringControl, LqError> {
    check_pair(a, b)?;
    if x_from.len() != a.nrows() || x_to.len() != a.nrows() {
        return Err(LqError::Dimension("endpoint dimension".into()));
    }
    if !(tau > 0.0) {
        return Err(LqError::Dimension(format!("steering time {tau} must be positive")));
    }
    let g = gramian(a, b, tau);
    let condition = linalg::condition_number(&g);
    if !(condition <= MAX_CONDITION) {
        return Err(LqError::Gramian { condition });
    }
    let rhs = x_to - linalg::expm(&(a * tau)) * x_from;
    let eta = g.clone().lu().solve(&rhs).ok_or(LqError::Gramian { condition })?;
    let mut steer = SteeringControl {
        a: a.clone(),
        b: b.clone(),
        tau,
        eta,
        x_from: x_from.clone(),
        gramian: g,
        endpoint_error: 0.0,
    };
    steer.endpoint_error = (steer.simulate_endpoint(CHECK_STEPS) - x_to).norm();
    Ok(steer)
}
