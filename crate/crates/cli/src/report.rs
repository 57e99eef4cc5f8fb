//! JSON report types. Vectors are plain arrays, matrices arrays of rows.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use turnpike::analysis::TurnpikeReport;
use turnpike::ocp::{AssumptionReport, StaticExtremal};
use turnpike::problem_file::ProblemFile;

/// Relative cost tolerance for flagging a global minimizer.
const GLOBAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtremalEntry {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
    pub lambda0: f64,
    pub f0_value: f64,
    pub kkt_residual_norm: f64,
    pub reduced_hessian_min: f64,
    pub iterations: usize,
    /// Cost within a relative 1e-6 of the best extremal.
    pub global: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assumptions: Option<AssumptionReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assumption_error: Option<String>,
}

impl ExtremalEntry {
    pub fn new(e: &StaticExtremal, best: f64) -> Self {
        Self {
            x: e.x.as_slice().to_vec(),
            u: e.u.as_slice().to_vec(),
            lambda: e.lambda.as_slice().to_vec(),
            lambda0: e.lambda0,
            f0_value: e.f0_value,
            kkt_residual_norm: e.kkt_residual_norm,
            reduced_hessian_min: e.reduced_hessian_min,
            iterations: e.iterations,
            global: e.f0_value - best <= GLOBAL_TOL * (1.0 + best.abs()),
            a: None,
            b: None,
            assumptions: None,
            assumption_error: None,
        }
    }

    pub fn extremal(&self) -> StaticExtremal {
        StaticExtremal {
            x: DVector::from_vec(self.x.clone()),
            u: DVector::from_vec(self.u.clone()),
            lambda: DVector::from_vec(self.lambda.clone()),
            lambda0: self.lambda0,
            kkt_residual_norm: self.kkt_residual_norm,
            f0_value: self.f0_value,
            iterations: self.iterations,
            reduced_hessian_min: self.reduced_hessian_min,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StaticReport {
    pub problem: ProblemFile,
    pub seed: u64,
    pub starts: usize,
    pub converged: usize,
    pub boundary_rejected: usize,
    /// Ascending by cost; the first entry is the global candidate.
    pub extremals: Vec<ExtremalEntry>,
    pub non_minimizers: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub problem: Option<String>,
    pub method: String,
    pub horizon: f64,
    pub converged: bool,
    pub cost: Option<f64>,
    pub iterations: usize,
    /// Shooting residual, or the largest constraint violation for direct solves.
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationarity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intervals: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub turnpike: Option<Vec<f64>>,
    pub midpoint: Option<Vec<f64>>,
    /// ‖x(T/2) − x̄‖ when a turnpike was used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub midpoint_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hamiltonian_drift: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub horizon: f64,
    pub turnpike: Vec<f64>,
    /// Spectral gap of the linearized extremal flow at the turnpike.
    pub predicted_nu: Option<f64>,
    #[serde(flatten)]
    pub report: TurnpikeReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub minimizers: Vec<Vec<f64>>,
    pub cells: usize,
    pub unresolved: usize,
    /// Cells per label, in minimizer order.
    pub counts: Vec<usize>,
}
