//! Sampled state/costate/control trajectories and their CSV form.

use std::io::{BufRead, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which multiplier normalization the stored costate uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostateScale {
    /// λ⁰ = −1/2, as in the linear-quadratic module.
    Half,
    /// λ⁰ = −1, as in the nonlinear modules and in CSV files.
    Unit,
}

impl CostateScale {
    /// Factor turning a costate in this scale into the λ⁰ = −1 scale.
    pub fn to_unit_factor(self) -> f64 {
        match self {
            CostateScale::Half => 2.0,
            CostateScale::Unit => 1.0,
        }
    }
}

/// Converts a λ⁰ = −1/2 costate into the λ⁰ = −1 convention.
pub fn half_to_unit_costate(lambda: &DVector<f64>) -> DVector<f64> {
    lambda * 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub method: String,
    pub costate: CostateScale,
    pub tolerance: f64,
    pub iterations: usize,
    pub cost: f64,
}

impl TrajectoryMeta {
    pub fn new(method: &str, costate: CostateScale) -> Self {
        Self { method: method.to_string(), costate, tolerance: 0.0, iterations: 0, cost: f64::NAN }
    }
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("time grid must start at 0 and be strictly increasing")]
    BadGrid,
    #[error("sample arrays have inconsistent lengths or dimensions")]
    Shape,
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub costates: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(
        times: Vec<f64>,
        states: Vec<DVector<f64>>,
        costates: Vec<DVector<f64>>,
        controls: Vec<DVector<f64>>,
        meta: TrajectoryMeta,
    ) -> Result<Self, TrajectoryError> {
        let len = times.len();
        if len < 2 || times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(TrajectoryError::BadGrid);
        }
        if states.len() != len || costates.len() != len || controls.len() != len {
            return Err(TrajectoryError::Shape);
        }
        let n = states[0].len();
        let m = controls[0].len();
        if states.iter().any(|x| x.len() != n)
            || costates.iter().any(|l| l.len() != n)
            || controls.iter().any(|u| u.len() != m)
        {
            return Err(TrajectoryError::Shape);
        }
        Ok(Self { times, states, costates, controls, meta })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.states[0].len(), self.controls[0].len())
    }

    /// Costate sample `i` in the λ⁰ = −1 convention.
    pub fn costate_unit(&self, i: usize) -> DVector<f64> {
        &self.costates[i] * self.meta.costate.to_unit_factor()
    }

    pub fn into_unit_costate(mut self) -> Self {
        let factor = self.meta.costate.to_unit_factor();
        for l in &mut self.costates {
            *l *= factor;
        }
        self.meta.costate = CostateScale::Unit;
        self
    }

    /// Index of the sample closest to time `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        let pos = self.times.partition_point(|&s| s < t);
        if pos == 0 {
            0
        } else if pos >= self.len() {
            self.len() - 1
        } else if (self.times[pos] - t).abs() < (t - self.times[pos - 1]).abs() {
            pos
        } else {
            pos - 1
        }
    }

    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        trapezoid(&self.times, values)
    }

    /// Writes `t,x1..xn,u1..um,lambda1..lambdan`, costates in the λ⁰ = −1 convention.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), TrajectoryError> {
        let (n, m) = self.dims();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|j| format!("u{j}")));
        header.extend((1..=n).map(|i| format!("lambda{i}")));
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = Vec::with_capacity(1 + 2 * n + m);
            row.push(self.times[i]);
            row.extend(self.states[i].iter());
            row.extend(self.controls[i].iter());
            row.extend(self.costate_unit(i).iter());
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, TrajectoryError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| TrajectoryError::Csv("empty file".into()))??;
        let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
        let count = |prefix: &str| {
            cols.iter()
                .filter(|c| c.strip_prefix(prefix).is_some_and(|rest| rest.parse::<usize>().is_ok()))
                .count()
        };
        let n = count("x");
        let m = count("u");
        let mut expected = vec!["t".to_string()];
        expected.extend((1..=n).map(|i| format!("x{i}")));
        expected.extend((1..=m).map(|j| format!("u{j}")));
        expected.extend((1..=n).map(|i| format!("lambda{i}")));
        if cols != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(TrajectoryError::Csv(format!("unexpected header '{header}'")));
        }
        let (mut times, mut states, mut controls, mut costates) = (vec![], vec![], vec![], vec![]);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| TrajectoryError::Csv(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != 1 + 2 * n + m {
                return Err(TrajectoryError::Csv(format!("line {}: wrong column count", lineno + 2)));
            }
            times.push(vals[0]);
            states.push(DVector::from_column_slice(&vals[1..1 + n]));
            controls.push(DVector::from_column_slice(&vals[1 + n..1 + n + m]));
            costates.push(DVector::from_column_slice(&vals[1 + n + m..]));
        }
        Trajectory::new(times, states, costates, controls, TrajectoryMeta::new("csv", CostateScale::Unit))
    }
}

/// Composite trapezoid rule on a possibly non-uniform grid.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Uniform grid of `samples` points on [0, horizon] (at least two).
pub fn uniform_grid(horizon: f64, samples: usize) -> Vec<f64> {
    let k = samples.max(2) - 1;
    (0..=k)
        .map(|i| if i == k { horizon } else { horizon * i as f64 / k as f64 })
        .collect()
}
