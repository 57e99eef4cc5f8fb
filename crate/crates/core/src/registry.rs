//! Built-in example problems.

use crate::lq::LqProblem;
use crate::ocp::{ControlProblem, SearchBox};
use crate::problem_file::{BoundaryFile, LqFile, ProblemFile};

/// Cubic coefficient giving two equal-cost global steady states.
pub const CUBIC_ALPHA: f64 = -1.0225539756;
/// Radius of the zero-cost orbit of the circle example.
pub const CIRCLE_RADIUS: f64 = 3.0;

pub const NAMES: &[&str] = &[
    "lq-scalar",
    "exa",
    "exa-loc1",
    "exa-loc2",
    "circle",
    "cubic1d",
    "cubic1d-free-neg",
    "cubic1d-free-pos",
];

fn base(name: &str, n: usize, f: &[&str], f0: &str, boundary: BoundaryFile, horizon: f64, half_width: f64) -> ProblemFile {
    ProblemFile {
        name: Some(name.to_string()),
        n,
        m: 1,
        f: f.iter().map(|s| s.to_string()).collect(),
        f0: f0.to_string(),
        boundary,
        omega: None,
        lq: None,
        horizon: Some(horizon),
        search_box: Some(SearchBox::cube(n, half_width)),
        orbit_radius: None,
    }
}

const EXA_F: [&str; 2] = ["x1 - x2", "-4*x1 + x2^3 + u1"];
const EXA_F0: &str = "(x1 - 1)^2 + (x2 - 2)^2 + u1^2";

fn cubic_f() -> String {
    format!("4*x1 + ({CUBIC_ALPHA})*x1^3 + u1")
}

fn circle_f0() -> String {
    let r2 = CIRCLE_RADIUS * CIRCLE_RADIUS;
    format!(
        "smoothstep(x1^2 + x2^2)*((x1 - 1)^2 + x2^2) + (1 - smoothstep(x1^2 + x2^2))*(x1^2 + x2^2 - {r2})^2 + u1^2"
    )
}

pub fn problem_file(name: &str) -> Option<ProblemFile> {
    let ff = |x0: &[f64], x1: &[f64]| BoundaryFile::FixedFixed { x0: x0.to_vec(), x1: x1.to_vec() };
    Some(match name {
        "lq-scalar" => {
            let mut file = base("lq-scalar", 1, &["-x1 + u1"], "(x1 - 1)^2 + u1^2", ff(&[0.0], &[1.0]), 10.0, 3.0);
            file.lq = Some(LqFile::from_problem(&lq_scalar_data()));
            file
        }
        "exa" => base("exa", 2, &EXA_F, EXA_F0, ff(&[1.0, 2.5], &[3.0, 1.5]), 20.0, 3.0),
        "exa-loc1" => base("exa-loc1", 2, &EXA_F, EXA_F0, ff(&[-1.9, -1.8], &[-1.7, -2.0]), 20.0, 3.0),
        "exa-loc2" => base("exa-loc2", 2, &EXA_F, EXA_F0, ff(&[0.0, 0.0], &[-0.5, 0.5]), 20.0, 3.0),
        "circle" => {
            let f0 = circle_f0();
            let mut file = base("circle", 2, &["x2", "-x1 + u1"], &f0, ff(&[-0.5, 0.0], &[1.0, 0.0]), 100.0, 4.0);
            file.orbit_radius = Some(CIRCLE_RADIUS);
            file
        }
        "cubic1d" => {
            let f = cubic_f();
            base("cubic1d", 1, &[&f], "(x1 - 1)^2 + u1^2", ff(&[1.1], &[1.0]), 2.0, 3.0)
        }
        "cubic1d-free-neg" | "cubic1d-free-pos" => {
            let f = cubic_f();
            let x0 = if name.ends_with("neg") { -2.0 } else { 2.0 };
            base(name, 1, &[&f], "(x1 - 1)^2 + u1^2", BoundaryFile::FixedFree { x0: vec![x0] }, 2.0, 3.0)
        }
        _ => return None,
    })
}

fn problem(name: &str) -> ControlProblem {
    problem_file(name)
        .expect("registered name")
        .to_problem()
        .expect("registered problems are valid")
}

/// A = −1, B = Q = U = 1, x_d = 1, u_d = 0.
pub fn lq_scalar_data() -> LqProblem {
    LqProblem::scalar(-1.0, 1.0, 1.0, 1.0, 1.0, 0.0).expect("valid scalar data")
}

pub fn lq_scalar() -> ControlProblem {
    problem("lq-scalar")
}

pub fn exa() -> ControlProblem {
    problem("exa")
}

pub fn circle() -> ControlProblem {
    problem("circle")
}

pub fn cubic1d() -> ControlProblem {
    problem("cubic1d")
}
