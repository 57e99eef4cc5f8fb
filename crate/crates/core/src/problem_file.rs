//! JSON problem files.
//!
//! ```json
//! {
//!   "n": 1, "m": 1,
//!   "f": ["-x1 + u1"],
//!   "f0": "(x1 - 1)^2 + u1^2",
//!   "boundary": {"type": "fixed_fixed", "x0": [0], "x1": [1]},
//!   "omega": {"lo": [null], "hi": [null]},
//!   "lq": {"A": [[-1]], "B": [[1]], "Q": [[1]], "U": [[1]], "xd": [1], "ud": [0]},
//!   "horizon": 10
//! }
//! ```
//! Matrices are arrays of rows. `null` bounds mean unbounded. `omega`, `lq`,
//! `horizon`, `search_box` and `orbit_radius` are optional.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::VectorField;
use crate::lq::{LqError, LqProblem};
use crate::ocp::{BoundarySpec, ControlBounds, ControlProblem, OcpError, SearchBox};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Ocp(#[from] OcpError),
    #[error(transparent)]
    Lq(#[from] LqError),
}

impl From<serde_json::Error> for ProblemError {
    fn from(e: serde_json::Error) -> Self {
        ProblemError::Json { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryFile {
    FixedFixed { x0: Vec<f64>, x1: Vec<f64> },
    FixedFree { x0: Vec<f64> },
    FixedConstrained { x0: Vec<f64>, g: Vec<String> },
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaFile {
    pub lo: Vec<Option<f64>>,
    pub hi: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "U")]
    pub u: Vec<Vec<f64>>,
    pub xd: Vec<f64>,
    pub ud: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    pub m: usize,
    pub f: Vec<String>,
    pub f0: String,
    pub boundary: BoundaryFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<OmegaFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lq: Option<LqFile>,
    /// Default horizon T.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Default multistart region over the state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_box: Option<SearchBox>,
    /// Radius of a zero-cost periodic orbit used as an alternative initialization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orbit_radius: Option<f64>,
}

/// Row-major nested arrays from a matrix.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ProblemError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(ProblemError::Schema(format!("{what} must be a non-empty rectangular array of rows")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl LqFile {
    pub fn from_problem(p: &LqProblem) -> Self {
        Self {
            a: matrix_rows(p.a()),
            b: matrix_rows(p.b()),
            q: matrix_rows(p.q()),
            u: matrix_rows(p.u()),
            xd: p.xd().iter().copied().collect(),
            ud: p.ud().iter().copied().collect(),
        }
    }

    pub fn to_problem(&self) -> Result<LqProblem, ProblemError> {
        Ok(LqProblem::new(
            matrix_from_rows(&self.a, "lq.A")?,
            matrix_from_rows(&self.b, "lq.B")?,
            matrix_from_rows(&self.q, "lq.Q")?,
            matrix_from_rows(&self.u, "lq.U")?,
            DVector::from_column_slice(&self.xd),
            DVector::from_column_slice(&self.ud),
        )?)
    }
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self, ProblemError> {
        let file: ProblemFile = serde_json::from_str(text)?;
        file.validate()?;
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize")
    }

    /// Schema checks plus a full build of the problem.
    pub fn validate(&self) -> Result<(), ProblemError> {
        let problem = self.to_problem()?;
        if let Some(lq) = self.lq_problem()? {
            self.check_lq_consistency(&problem, &lq)?;
        }
        if let Some(b) = &self.search_box {
            if b.lo.len() != self.n || b.hi.len() != self.n || b.lo.iter().zip(&b.hi).any(|(l, h)| !(l <= h)) {
                return Err(ProblemError::Schema("search_box must have ordered bounds of length n".into()));
            }
        }
        if let Some(t) = self.horizon {
            if !(t > 0.0) {
                return Err(ProblemError::Schema("horizon must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn boundary_spec(&self) -> Result<BoundarySpec, ProblemError> {
        let v = |x: &[f64]| DVector::from_column_slice(x);
        Ok(match &self.boundary {
            BoundaryFile::FixedFixed { x0, x1 } => BoundarySpec::FixedFixed { x0: v(x0), x1: v(x1) },
            BoundaryFile::FixedFree { x0 } => BoundarySpec::FixedFree { x0: v(x0) },
            BoundaryFile::FixedConstrained { x0, g } => BoundarySpec::FixedConstrained {
                x0: v(x0),
                g: VectorField::parse(g, self.n, self.m).map_err(OcpError::from)?,
            },
            BoundaryFile::Periodic => BoundarySpec::Periodic,
        })
    }

    pub fn to_problem(&self) -> Result<ControlProblem, ProblemError> {
        if self.n == 0 || self.m == 0 {
            return Err(ProblemError::Schema("n and m must be positive".into()));
        }
        if self.f.len() != self.n {
            return Err(ProblemError::Schema(format!("f has {} entries, expected n = {}", self.f.len(), self.n)));
        }
        let omega = match &self.omega {
            None => None,
            Some(o) => {
                if o.lo.len() != self.m || o.hi.len() != self.m {
                    return Err(ProblemError::Schema("omega.lo and omega.hi must have length m".into()));
                }
                Some(ControlBounds {
                    lo: o.lo.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect(),
                    hi: o.hi.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(),
                })
            }
        };
        Ok(ControlProblem::parse(self.n, self.m, &self.f, &self.f0, self.boundary_spec()?, omega)?)
    }

    pub fn lq_problem(&self) -> Result<Option<LqProblem>, ProblemError> {
        match &self.lq {
            None => Ok(None),
            Some(l) => {
                let p = l.to_problem()?;
                if p.n() != self.n || p.m() != self.m {
                    return Err(ProblemError::Schema("lq block dimensions disagree with n, m".into()));
                }
                Ok(Some(p))
            }
        }
    }

    /// The expressions must describe the same dynamics and cost as the lq block.
    fn check_lq_consistency(&self, p: &ControlProblem, lq: &LqProblem) -> Result<(), ProblemError> {
        let (n, m) = (self.n, self.m);
        for k in 0..5 {
            let x = DVector::from_fn(n, |i, _| ((k * 7 + i * 3) % 11) as f64 * 0.37 - 1.3);
            let u = DVector::from_fn(m, |j, _| ((k * 5 + j * 2) % 7) as f64 * 0.41 - 1.1);
            let df = (p.f(&x, &u)? - lq.dynamics(&x, &u)).amax();
            let c = lq.running_cost(&x, &u);
            let dc = (p.f0(&x, &u)? - c).abs();
            if df > 1e-9 * (1.0 + x.amax() + u.amax()) || dc > 1e-9 * (1.0 + c.abs()) {
                return Err(ProblemError::Schema("lq block disagrees with f/f0".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malformed_json_reports_position() {
        let err = ProblemFile::from_json("{\n  \"n\": 1,\n  \"m\": ,\n}").unwrap_err();
        match err {
            ProblemError::Json { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_errors() {
        let bad_f = r#"{"n":1,"m":1,"f":["x2"],"f0":"u1^2","boundary":{"type":"periodic"}}"#;
        assert!(matches!(ProblemFile::from_json(bad_f), Err(ProblemError::Ocp(OcpError::Parse(_)))));
        let bad_len = r#"{"n":2,"m":1,"f":["x1"],"f0":"u1^2","boundary":{"type":"periodic"}}"#;
        assert!(matches!(ProblemFile::from_json(bad_len), Err(ProblemError::Schema(_))));
        let mismatch = r#"{"n":1,"m":1,"f":["-x1+u1"],"f0":"(x1-1)^2+u1^2","boundary":{"type":"periodic"},
            "lq":{"A":[[-1]],"B":[[1]],"Q":[[1]],"U":[[2]],"xd":[1],"ud":[0]}}"#;
        assert!(matches!(ProblemFile::from_json(mismatch), Err(ProblemError::Schema(_))));
    }

    #[test]
    fn unbounded_omega_uses_null() {
        let text = r#"{"n":1,"m":1,"f":["u1"],"f0":"u1^2","boundary":{"type":"fixed_free","x0":[1]},
            "omega":{"lo":[null],"hi":[2.5]}}"#;
        let file = ProblemFile::from_json(text).unwrap();
        let p = file.to_problem().unwrap();
        assert_eq!(p.omega().lo[0], f64::NEG_INFINITY);
        assert_eq!(p.omega().hi[0], 2.5);
        let back = ProblemFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back, file);
    }
}
