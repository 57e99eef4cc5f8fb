use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use super::AnalysisError;
use crate::direct::{
    default_intervals, init_orbit, init_turnpike, init_turnpike_multipliers, solve_al_from, transcribe, AlConfig,
};
use crate::exec::{map_indexed, Execution};
use crate::ocp::{BoundarySpec, ControlProblem, StaticExtremal};

/// Extremals closer than this are the same minimizer.
const SAME_POSITION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub horizon: f64,
    /// Defaults to 20 per unit time.
    pub intervals: Option<usize>,
    /// Adds a zero-control orbit start of this radius (planar problems).
    pub orbit_radius: Option<f64>,
    pub al: AlConfig,
    pub exec: Execution,
}

impl SweepConfig {
    pub fn new(horizon: f64) -> Self {
        Self { horizon, intervals: None, orbit_radius: None, al: AlConfig::default(), exec: Execution::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    /// Index into [`SweepResult::minimizers`]; None when unresolved.
    pub label: Option<usize>,
    pub cost: Option<f64>,
    pub midpoint: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// Distinct minimizer states, ascending lexicographically.
    pub minimizers: Vec<Vec<f64>>,
    /// Row-major: x0 varies slowest.
    pub cells: Vec<SweepCell>,
    pub x0_count: usize,
    pub x1_count: usize,
}

impl SweepResult {
    pub fn unresolved(&self) -> usize {
        self.cells.iter().filter(|c| c.label.is_none()).count()
    }

    /// `x0,x1,label,cost` (vector states get one column per component).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.minimizers.first().map_or(1, |m| m.len());
        let names = |tag: &str| -> Vec<String> {
            if n == 1 {
                vec![tag.to_string()]
            } else {
                (1..=n).map(|k| format!("{tag}_{k}")).collect()
            }
        };
        let mut header = names("x0");
        header.extend(names("x1"));
        header.extend(["label".to_string(), "cost".to_string()]);
        writeln!(w, "{}", header.join(","))?;
        for c in &self.cells {
            let mut row: Vec<String> = c.x0.iter().chain(&c.x1).map(|v| format!("{v:.17e}")).collect();
            row.push(c.label.map_or("unresolved".to_string(), |l| l.to_string()));
            row.push(c.cost.map_or("nan".to_string(), |v| format!("{v:.17e}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Distinct extremals ordered by state so labels do not depend on input order.
fn canonical(extremals: &[StaticExtremal]) -> Vec<StaticExtremal> {
    let mut list = extremals.to_vec();
    list.sort_by(|a, b| {
        a.x.iter().zip(b.x.iter()).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut kept: Vec<StaticExtremal> = Vec::new();
    for e in list {
        if kept.iter().all(|k| (&k.x - &e.x).norm() > SAME_POSITION) {
            kept.push(e);
        }
    }
    kept
}

fn nearest(minimizers: &[StaticExtremal], x: &DVector<f64>) -> Option<usize> {
    let dist: Vec<f64> = minimizers.iter().map(|e| (&e.x - x).norm()).collect();
    let best = dist.iter().cloned().fold(f64::INFINITY, f64::min);
    let hits: Vec<usize> = (0..dist.len()).filter(|&k| dist[k] == best).collect();
    (hits.len() == 1).then(|| hits[0])
}

/// Least-cost direct solve per (x0, x1) cell over the turnpike starts,
/// labelled by the minimizer nearest to x(T/2).
pub fn sweep(
    p: &ControlProblem,
    x0s: &[DVector<f64>],
    x1s: &[DVector<f64>],
    extremals: &[StaticExtremal],
    cfg: &SweepConfig,
) -> Result<SweepResult, AnalysisError> {
    let minimizers = canonical(extremals);
    if minimizers.len() < 2 {
        return Err(AnalysisError::TooFewExtremals(minimizers.len()));
    }
    let n = p.n();
    if x0s.iter().chain(x1s).any(|x| x.len() != n) || minimizers.iter().any(|e| e.x.len() != n) {
        return Err(AnalysisError::Dimension(format!("sweep states must have length {n}")));
    }
    let intervals = cfg.intervals.unwrap_or_else(|| default_intervals(cfg.horizon));
    let cells = map_indexed(x0s.len() * x1s.len(), cfg.exec, |k| {
        let (x0, x1) = (&x0s[k / x1s.len()], &x1s[k % x1s.len()]);
        let base = SweepCell { x0: x0.as_slice().to_vec(), x1: x1.as_slice().to_vec(), label: None, cost: None, midpoint: None };
        let Ok(q) = p.with_boundary(BoundarySpec::FixedFixed { x0: x0.clone(), x1: x1.clone() }) else { return base };
        let Ok(tr) = transcribe(&q, cfg.horizon, intervals) else { return base };
        let mut starts: Vec<(DVector<f64>, DVector<f64>)> =
            minimizers.iter().map(|e| (init_turnpike(&tr, e), init_turnpike_multipliers(&tr, e))).collect();
        if let Some(r) = cfg.orbit_radius {
            if let Ok(w) = init_orbit(&tr, r) {
                starts.push((w, DVector::zeros(tr.n_constraints())));
            }
        }
        let best = starts
            .iter()
            .filter_map(|(w, mu)| solve_al_from(&tr, w, mu, &cfg.al).ok().filter(|r| r.converged))
            .min_by(|a, b| a.objective.total_cmp(&b.objective));
        let Some(best) = best else { return base };
        let mid = tr.node(&best.w, tr.nearest_node(0.5 * cfg.horizon)).0;
        SweepCell {
            label: nearest(&minimizers, &mid),
            cost: Some(best.objective),
            midpoint: Some(mid.as_slice().to_vec()),
            ..base
        }
    });
    Ok(SweepResult {
        minimizers: minimizers.iter().map(|e| e.x.as_slice().to_vec()).collect(),
        cells,
        x0_count: x0s.len(),
        x1_count: x1s.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::{static_newton, StaticGuess};
    use crate::registry;

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn cubic_minimizers() -> Vec<StaticExtremal> {
        let p = registry::cubic1d();
        [0.06, 1.96, -1.93].iter().map(|g| static_newton(&p, &StaticGuess::new(&[*g], &[0.0], &[0.0])).unwrap()).collect()
    }

    #[test]
    fn labels_ignore_extremal_order() {
        let p = registry::cubic1d();
        let mut ex = cubic_minimizers();
        let cfg = SweepConfig { exec: Execution::Sequential, ..SweepConfig::new(2.0) };
        let x0s = [v(1.0), v(1.5)];
        let a = sweep(&p, &x0s, &[v(1.0)], &ex, &cfg).unwrap();
        ex.reverse();
        ex.push(ex[0].clone());
        let b = sweep(&p, &x0s, &[v(1.0)], &ex, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.minimizers.len(), 3);
    }

    #[test]
    fn single_cell_grid() {
        let p = registry::cubic1d();
        let r = sweep(&p, &[v(1.0)], &[v(1.0)], &cubic_minimizers(), &SweepConfig::new(2.0)).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert!(r.cells[0].label.is_some());
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("x0,x1,label,cost\n"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn needs_two_extremals() {
        let p = registry::cubic1d();
        let ex = cubic_minimizers();
        let r = sweep(&p, &[v(1.0)], &[v(1.0)], &[ex[0].clone(), ex[0].clone()], &SweepConfig::new(2.0));
        assert!(matches!(r, Err(AnalysisError::TooFewExtremals(1))));
    }

    #[test]
    fn exact_tie_is_unresolved() {
        let ex = cubic_minimizers();
        let (mut a, mut b) = (ex[0].clone(), ex[1].clone());
        a.x = v(-1.0);
        b.x = v(1.0);
        let two = vec![a, b];
        assert_eq!(nearest(&two, &v(0.0)), None);
        assert_eq!(nearest(&two, &v(0.9)), Some(1));
    }
}
