//! Problem resolution, grid parsing and atomic file output.

use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use turnpike::problem_file::{ProblemError, ProblemFile};
use turnpike::registry;

/// Process exit status with a message for stderr.
#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub message: String,
}

pub const INPUT: u8 = 2;
pub const NO_EXTREMAL: u8 = 3;
pub const SOLVER: u8 = 4;
pub const SWEEP_QUALITY: u8 = 5;
const INTERNAL: u8 = 1;

impl Exit {
    pub fn input(message: impl fmt::Display) -> Self {
        Self { code: INPUT, message: message.to_string() }
    }

    pub fn internal(message: impl fmt::Display) -> Self {
        Self { code: INTERNAL, message: message.to_string() }
    }
}

impl From<ProblemError> for Exit {
    fn from(e: ProblemError) -> Self {
        Exit::input(e)
    }
}

/// A registry name or a path to a JSON problem file.
pub fn load_problem(arg: &str) -> Result<ProblemFile, Exit> {
    if let Some(file) = registry::problem_file(arg) {
        return Ok(file);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(Exit::input(format!(
            "'{arg}' is neither a file nor a built-in problem ({})",
            registry::NAMES.join(", ")
        )));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Exit::input(format!("{arg}: {e}")))?;
    let file = ProblemFile::from_json(&text).map_err(|e| Exit::input(format!("{arg}: {e}")))?;
    file.validate().map_err(|e| Exit::input(format!("{arg}: {e}")))?;
    Ok(file)
}

/// Comma-separated reals.
pub fn parse_list(text: &str) -> Result<Vec<f64>, Exit> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Exit::input(format!("'{s}' is not a number in '{text}'"))))
        .collect()
}

/// `a:b:step` (scalar states) or points separated by `;`, components by `,`.
/// For scalar states a plain comma list is a list of points.
pub fn parse_grid(text: &str, n: usize) -> Result<Vec<DVector<f64>>, Exit> {
    let points: Vec<DVector<f64>> = if text.contains(':') {
        let parts = parse_range(text)?;
        if n != 1 {
            return Err(Exit::input(format!("range grid '{text}' needs a scalar state, problem has n = {n}")));
        }
        parts.into_iter().map(|v| DVector::from_element(1, v)).collect()
    } else if n == 1 && !text.contains(';') {
        parse_list(text)?.into_iter().map(|v| DVector::from_element(1, v)).collect()
    } else {
        text.split(';').map(|p| parse_list(p).map(DVector::from_vec)).collect::<Result<_, _>>()?
    };
    if let Some(bad) = points.iter().find(|p| p.len() != n) {
        return Err(Exit::input(format!("grid point of length {} in '{text}', expected {n}", bad.len())));
    }
    if points.is_empty() {
        return Err(Exit::input(format!("empty grid '{text}'")));
    }
    Ok(points)
}

fn parse_range(text: &str) -> Result<Vec<f64>, Exit> {
    let v = text
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Exit::input(format!("bad range '{text}'"))))
        .collect::<Result<Vec<f64>, _>>()?;
    let [a, b, step] = v[..] else {
        return Err(Exit::input(format!("range '{text}' must be start:stop:step")));
    };
    if !(step > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
        return Err(Exit::input(format!("range '{text}' needs start <= stop and step > 0")));
    }
    // indices rather than accumulation so the endpoints are exact
    let count = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| if k == count && ((b - a) / step - count as f64).abs() < 1e-9 { b } else { a + k as f64 * step }).collect())
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), Exit> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| Exit::internal(format!("writing {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w).map_err(fail)?;
        w.flush().map_err(fail)?;
    }
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

/// JSON to a file, or to stdout when no path is given.
pub fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<(), Exit> {
    let text = serde_json::to_string_pretty(value).map_err(Exit::internal)?;
    match out {
        Some(path) => write_atomic(path, |w| writeln!(w, "{text}")),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_keeps_endpoints() {
        let g = parse_grid("1.1:1.2:0.01", 1).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0][0], 1.1);
        assert_eq!(g[10][0], 1.2);
    }

    #[test]
    fn point_lists() {
        let g = parse_grid("1,2;3,4", 2).unwrap();
        assert_eq!(g[1].as_slice(), &[3.0, 4.0]);
        assert_eq!(parse_grid("1,2", 1).unwrap().len(), 2);
        assert_eq!(parse_grid("1,2;3", 2).unwrap_err().code, INPUT);
        assert_eq!(parse_grid("0:1:0.5", 2).unwrap_err().code, INPUT);
        assert_eq!(parse_grid("1:0:0.5", 1).unwrap_err().code, INPUT);
    }

    #[test]
    fn unknown_problem_is_input_error() {
        assert_eq!(load_problem("no-such-problem").unwrap_err().code, INPUT);
        assert!(load_problem("exa").is_ok());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        write_atomic(&path, |w| write!(w, "one")).unwrap();
        write_atomic(&path, |w| write!(w, "two")).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
