//! `turnpike` command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 no extremal, 4 solver failure,
//! 5 too many unresolved sweep cells.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod io;
mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use turnpike::analysis::{sweep, turnpike_report, SweepConfig};
use turnpike::direct::{
    default_intervals, init_orbit, init_turnpike, init_turnpike_multipliers, solve_al_from, transcribe, AlConfig,
};
use turnpike::exec::Execution;
use turnpike::lq::LqBvp;
use turnpike::ocp::{check_assumptions, linearize, static_multistart, BoundarySpec, ControlProblem, SearchBox, StaticExtremal};
use turnpike::problem_file::{matrix_rows, BoundaryFile, ProblemFile};
use turnpike::shooting::{shoot, ShootingConfig, ShootingGuess, Variant};
use turnpike::trajectory::Trajectory;

use io::{Exit, INPUT, NO_EXTREMAL, SOLVER, SWEEP_QUALITY};
use report::{AnalyzeReport, ExtremalEntry, SolveReport, StaticReport, SweepSummary};

/// Fraction of unresolved sweep cells tolerated before exit 5.
const UNRESOLVED_LIMIT: f64 = 0.05;
/// Half-width of the default static search box.
const DEFAULT_HALF_WIDTH: f64 = 3.0;

#[derive(Parser, Debug)]
#[command(name = "turnpike", version, about = "Steady states, long-horizon optimal control and turnpike diagnostics")]
struct Cli {
    /// Worker threads for parallel work (1 runs sequentially).
    #[arg(long, global = true, env = "TURNPIKE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct StaticArgs {
    /// Multistart count.
    #[arg(long, default_value_t = 64)]
    starts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Steady-state extremals with assumption checks.
    Static {
        /// Built-in name or JSON problem file.
        problem: String,
        #[command(flatten)]
        search: StaticArgs,
        /// JSON report path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal trajectory on [0, T].
    Solve {
        problem: String,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long = "T")]
        horizon: Option<f64>,
        /// Trajectory CSV path.
        #[arg(long)]
        out: PathBuf,
        /// JSON report path (defaults to the CSV path with a .json extension).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Index into the static extremal list (0 is the global candidate).
        #[arg(long, default_value_t = 0)]
        turnpike: usize,
        /// Static report to take the turnpike from instead of a fresh multistart.
        #[arg(long = "static")]
        static_report: Option<PathBuf>,
        /// Direct-solver initialization.
        #[arg(long, value_enum, default_value_t = Init::Turnpike)]
        init: Init,
        /// Direct-solver intervals (default 20 per unit time).
        #[arg(long)]
        intervals: Option<usize>,
        /// Overrides the initial state, comma-separated.
        #[arg(long)]
        x0: Option<String>,
        /// Overrides the terminal state, comma-separated.
        #[arg(long)]
        x1: Option<String>,
        #[command(flatten)]
        search: StaticArgs,
    },
    /// Turnpike diagnostics of a trajectory CSV against a static report.
    Analyze {
        trajectory: PathBuf,
        static_report: PathBuf,
        #[arg(long, default_value_t = 0)]
        turnpike: usize,
        /// Neighborhood radii, comma-separated.
        #[arg(long, default_value = "0.1,0.05,0.01")]
        eps: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimizer label map over a grid of boundary states.
    Sweep {
        problem: String,
        /// `start:stop:step` or points `a,b;c,d`.
        #[arg(long = "x0-grid")]
        x0_grid: String,
        #[arg(long = "x1-grid")]
        x1_grid: String,
        #[arg(long = "T")]
        horizon: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        intervals: Option<usize>,
        #[command(flatten)]
        search: StaticArgs,
    },
    /// Prints a built-in problem as a JSON problem file.
    Export {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Method {
    Lq,
    ShootClassic,
    ShootMidpoint,
    Direct,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Lq => "lq",
            Method::ShootClassic => "shoot-classic",
            Method::ShootMidpoint => "shoot-midpoint",
            Method::Direct => "direct",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Turnpike,
    /// Zero-control orbit of the problem's `orbit_radius`.
    Circle,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = match configure_threads(cli.threads) {
        Ok(e) => e,
        Err(e) => return fail(e),
    };
    let result = match cli.command {
        Command::Static { problem, search, out } => cmd_static(&problem, &search, out.as_deref(), exec),
        Command::Solve { problem, method, horizon, out, report, turnpike, static_report, init, intervals, x0, x1, search } => {
            let opts = SolveOptions {
                method,
                horizon,
                turnpike,
                static_report,
                init,
                intervals,
                x0,
                x1,
                search,
                exec,
            };
            let report = report.unwrap_or_else(|| out.with_extension("json"));
            cmd_solve(&problem, &opts, &out, &report)
        }
        Command::Analyze { trajectory, static_report, turnpike, eps, out } => {
            cmd_analyze(&trajectory, &static_report, turnpike, &eps, out.as_deref())
        }
        Command::Sweep { problem, x0_grid, x1_grid, horizon, out, intervals, search } => {
            cmd_sweep(&problem, &x0_grid, &x1_grid, horizon, intervals, &search, &out, exec)
        }
        Command::Export { name, out } => cmd_export(&name, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn fail(e: Exit) -> ExitCode {
    eprintln!("error: {}", e.message);
    ExitCode::from(e.code)
}

fn configure_threads(threads: Option<usize>) -> Result<Execution, Exit> {
    match threads {
        None => Ok(Execution::Parallel),
        Some(0) => Err(Exit::input("thread count must be positive")),
        Some(1) => Ok(Execution::Sequential),
        Some(k) => {
            rayon::ThreadPoolBuilder::new().num_threads(k).build_global().map_err(Exit::internal)?;
            Ok(Execution::Parallel)
        }
    }
}

fn build(file: &ProblemFile) -> Result<ControlProblem, Exit> {
    Ok(file.to_problem()?)
}

fn horizon_of(file: &ProblemFile, given: Option<f64>) -> Result<f64, Exit> {
    let t = given.or(file.horizon).ok_or_else(|| Exit::input("no horizon: pass --T"))?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Exit::input(format!("horizon must be positive, got {t}")));
    }
    Ok(t)
}

fn run_static(file: &ProblemFile, p: &ControlProblem, search: &StaticArgs, exec: Execution) -> Result<StaticReport, Exit> {
    let region = file.search_box.clone().unwrap_or_else(|| SearchBox::cube(p.n(), DEFAULT_HALF_WIDTH));
    let ms = static_multistart(p, &region, search.starts, search.seed, exec).map_err(Exit::input)?;
    let best = ms.extremals.first().map_or(0.0, |e| e.f0_value);
    let extremals = ms
        .extremals
        .iter()
        .map(|e| {
            let mut entry = ExtremalEntry::new(e, best);
            match linearize(p, e).and_then(|d| Ok((check_assumptions(&d, p)?, d))) {
                Ok((a, d)) => {
                    entry.a = Some(matrix_rows(&d.a));
                    entry.b = Some(matrix_rows(&d.b));
                    entry.assumptions = Some(a);
                }
                Err(err) => entry.assumption_error = Some(err.to_string()),
            }
            entry
        })
        .collect();
    Ok(StaticReport {
        problem: file.clone(),
        seed: search.seed,
        starts: ms.starts,
        converged: ms.converged,
        boundary_rejected: ms.boundary_rejected,
        extremals,
        non_minimizers: ms.non_minimizers.len(),
    })
}

fn cmd_static(problem: &str, search: &StaticArgs, out: Option<&Path>, exec: Execution) -> Result<(), Exit> {
    let file = io::load_problem(problem)?;
    let p = build(&file)?;
    let report = run_static(&file, &p, search, exec)?;
    io::emit_json(&report, out)?;
    if report.extremals.is_empty() {
        return Err(Exit { code: NO_EXTREMAL, message: format!("no extremal found from {} starts", search.starts) });
    }
    Ok(())
}

struct SolveOptions {
    method: Method,
    horizon: Option<f64>,
    turnpike: usize,
    static_report: Option<PathBuf>,
    init: Init,
    intervals: Option<usize>,
    x0: Option<String>,
    x1: Option<String>,
    search: StaticArgs,
    exec: Execution,
}

fn read_static(path: &Path) -> Result<StaticReport, Exit> {
    let text = std::fs::read_to_string(path).map_err(|e| Exit::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        Exit::input(format!("{}: invalid JSON at line {}, column {}: {e}", path.display(), e.line(), e.column()))
    })
}

fn pick_turnpike(report: &StaticReport, index: usize, n: usize) -> Result<StaticExtremal, Exit> {
    if report.extremals.is_empty() {
        return Err(Exit { code: NO_EXTREMAL, message: "static report has no extremal".into() });
    }
    let entry = report.extremals.get(index).ok_or_else(|| {
        Exit::input(format!("turnpike index {index} out of range ({} extremals)", report.extremals.len()))
    })?;
    if entry.x.len() != n {
        return Err(Exit::input(format!("turnpike has dimension {}, problem has n = {n}", entry.x.len())));
    }
    Ok(entry.extremal())
}

/// Applies --x0/--x1 to the boundary of the problem file.
fn override_boundary(file: &mut ProblemFile, x0: Option<&str>, x1: Option<&str>) -> Result<(), Exit> {
    let parse = |s: Option<&str>| s.map(io::parse_list).transpose();
    let (x0, x1) = (parse(x0)?, parse(x1)?);
    file.boundary = match (file.boundary.clone(), x0, x1) {
        (b, None, None) => b,
        (BoundaryFile::FixedFixed { x0: a, x1: b }, n0, n1) => {
            BoundaryFile::FixedFixed { x0: n0.unwrap_or(a), x1: n1.unwrap_or(b) }
        }
        (BoundaryFile::FixedFree { x0: a }, n0, None) => BoundaryFile::FixedFree { x0: n0.unwrap_or(a) },
        (BoundaryFile::FixedConstrained { x0: a, g }, n0, None) => {
            BoundaryFile::FixedConstrained { x0: n0.unwrap_or(a), g }
        }
        _ => return Err(Exit::input("--x0/--x1 do not apply to this boundary type")),
    };
    file.validate()?;
    Ok(())
}

fn cmd_solve(problem: &str, opts: &SolveOptions, out: &Path, report_path: &Path) -> Result<(), Exit> {
    let mut file = io::load_problem(problem)?;
    override_boundary(&mut file, opts.x0.as_deref(), opts.x1.as_deref())?;
    let p = build(&file)?;
    let horizon = horizon_of(&file, opts.horizon)?;
    let needs_turnpike = opts.method != Method::Lq && !(opts.method == Method::Direct && opts.init == Init::Circle);
    let turnpike = if needs_turnpike {
        let report = match &opts.static_report {
            Some(path) => read_static(path)?,
            None => run_static(&file, &p, &opts.search, opts.exec)?,
        };
        Some(pick_turnpike(&report, opts.turnpike, p.n())?)
    } else {
        None
    };

    let (traj, mut report) = match opts.method {
        Method::Lq => solve_lq(&file, horizon)?,
        Method::ShootClassic | Method::ShootMidpoint => {
            let e = turnpike.as_ref().expect("shooting uses a turnpike");
            let variant = if opts.method == Method::ShootClassic { Variant::Classic } else { Variant::Midpoint };
            let cfg = ShootingConfig { variant, ..ShootingConfig::default() };
            let r = shoot(&p, horizon, &ShootingGuess::from_turnpike(&p, e), &cfg).map_err(Exit::input)?;
            let report = SolveReport {
                problem: file.name.clone(),
                method: opts.method.name().into(),
                horizon,
                converged: r.converged,
                cost: r.trajectory.as_ref().filter(|_| r.converged).map(|t| t.meta.cost),
                iterations: r.iterations,
                residual: Some(r.residual_norm),
                stationarity: None,
                intervals: None,
                turnpike: None,
                midpoint: None,
                midpoint_distance: None,
                hamiltonian_drift: r.hamiltonian_drift.filter(|_| r.converged),
                failure: r.failure.clone(),
            };
            (r.trajectory, report)
        }
        Method::Direct => {
            let intervals = opts.intervals.unwrap_or_else(|| default_intervals(horizon));
            let tr = transcribe(&p, horizon, intervals).map_err(Exit::input)?;
            let (w, mu) = match (opts.init, &turnpike) {
                (Init::Turnpike, Some(e)) => (init_turnpike(&tr, e), init_turnpike_multipliers(&tr, e)),
                (Init::Circle, _) => {
                    let r = file.orbit_radius.ok_or_else(|| Exit::input("--init circle needs orbit_radius in the problem"))?;
                    (init_orbit(&tr, r).map_err(Exit::input)?, DVector::zeros(tr.n_constraints()))
                }
                (Init::Turnpike, None) => unreachable!("turnpike resolved above"),
            };
            let r = solve_al_from(&tr, &w, &mu, &AlConfig::default()).map_err(Exit::input)?;
            let traj = r.trajectory(&tr).ok().map(|mut t| {
                t.meta.cost = r.objective;
                t
            });
            let report = SolveReport {
                problem: file.name.clone(),
                method: opts.method.name().into(),
                horizon,
                converged: r.converged,
                cost: Some(r.objective),
                iterations: r.inner_iterations,
                residual: Some(r.max_violation),
                stationarity: Some(r.stationarity),
                intervals: Some(intervals),
                turnpike: None,
                midpoint: None,
                midpoint_distance: None,
                hamiltonian_drift: None,
                failure: r.failure.clone(),
            };
            (traj, report)
        }
    };

    if let Some(t) = &traj {
        let mid = t.states[t.nearest_index(0.5 * horizon)].clone();
        report.midpoint = Some(mid.as_slice().to_vec());
        if let Some(e) = &turnpike {
            report.turnpike = Some(e.x.as_slice().to_vec());
            report.midpoint_distance = Some((mid - &e.x).norm());
        }
        io::write_atomic(out, |w| t.write_csv(w).map_err(std::io::Error::other))?;
    }
    io::emit_json(&report, Some(report_path))?;
    if !report.converged {
        let why = report.failure.unwrap_or_else(|| "not converged".into());
        return Err(Exit { code: SOLVER, message: format!("{} did not converge: {why}", opts.method.name()) });
    }
    Ok(())
}

fn solve_lq(file: &ProblemFile, horizon: f64) -> Result<(Option<Trajectory>, SolveReport), Exit> {
    let lq = file.lq_problem()?.ok_or_else(|| Exit::input("--method lq needs an \"lq\" block in the problem"))?;
    let BoundaryFile::FixedFixed { x0, x1 } = &file.boundary else {
        return Err(Exit::input("--method lq needs fixed_fixed boundary conditions"));
    };
    let bvp = LqBvp::solve(&lq, &DVector::from_column_slice(x0), &DVector::from_column_slice(x1), horizon)
        .map_err(|e| Exit { code: SOLVER, message: e.to_string() })?;
    let samples = (100.0 * horizon).ceil() as usize + 1;
    let traj = bvp.trajectory(samples);
    let report = SolveReport {
        problem: file.name.clone(),
        method: Method::Lq.name().into(),
        horizon,
        converged: true,
        cost: Some(bvp.cost(samples.max(2000))),
        iterations: 0,
        residual: Some(bvp.ode_residual(400)),
        stationarity: None,
        intervals: None,
        turnpike: Some(bvp.turnpike.x.as_slice().to_vec()),
        midpoint: None,
        midpoint_distance: None,
        hamiltonian_drift: None,
        failure: None,
    };
    Ok((Some(traj), report))
}

fn cmd_analyze(traj_path: &Path, static_path: &Path, index: usize, eps: &str, out: Option<&Path>) -> Result<(), Exit> {
    let file = std::fs::File::open(traj_path).map_err(|e| Exit::input(format!("{}: {e}", traj_path.display())))?;
    let traj = Trajectory::read_csv(std::io::BufReader::new(file))
        .map_err(|e| Exit::input(format!("{}: {e}", traj_path.display())))?;
    let report = read_static(static_path)?;
    report.problem.validate()?;
    let p = build(&report.problem)?;
    let e = pick_turnpike(&report, index, p.n())?;
    if traj.dims() != (p.n(), p.m()) {
        return Err(Exit::input(format!(
            "trajectory has (n, m) = {:?}, problem has ({}, {})",
            traj.dims(),
            p.n(),
            p.m()
        )));
    }
    let eps = io::parse_list(eps)?;
    if eps.iter().any(|&x| !(x > 0.0)) {
        return Err(Exit::input("--eps values must be positive"));
    }
    let predicted_nu = report.extremals[index].assumptions.as_ref().and_then(|a| a.nu);
    let tp = turnpike_report(&traj, &p, &e, &eps).map_err(Exit::input)?;
    let out_report = AnalyzeReport { horizon: traj.horizon(), turnpike: e.x.as_slice().to_vec(), predicted_nu, report: tp };
    io::emit_json(&out_report, out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    problem: &str,
    x0_grid: &str,
    x1_grid: &str,
    horizon: Option<f64>,
    intervals: Option<usize>,
    search: &StaticArgs,
    out: &Path,
    exec: Execution,
) -> Result<(), Exit> {
    let file = io::load_problem(problem)?;
    let p = build(&file)?;
    if !matches!(p.boundary(), BoundarySpec::FixedFixed { .. }) {
        return Err(Exit::input("sweep needs a fixed_fixed problem"));
    }
    let horizon = horizon_of(&file, horizon)?;
    let x0s = io::parse_grid(x0_grid, p.n())?;
    let x1s = io::parse_grid(x1_grid, p.n())?;
    let report = run_static(&file, &p, search, exec)?;
    let extremals: Vec<StaticExtremal> = report.extremals.iter().map(ExtremalEntry::extremal).collect();
    if extremals.len() < 2 {
        return Err(Exit {
            code: NO_EXTREMAL,
            message: format!("sweep needs at least two extremals, found {}", extremals.len()),
        });
    }
    let cfg = SweepConfig { intervals, orbit_radius: file.orbit_radius, exec, ..SweepConfig::new(horizon) };
    let result = sweep(&p, &x0s, &x1s, &extremals, &cfg).map_err(Exit::input)?;
    io::write_atomic(out, |w| result.write_csv(w))?;

    let counts = (0..result.minimizers.len())
        .map(|k| result.cells.iter().filter(|c| c.label == Some(k)).count())
        .collect();
    let summary =
        SweepSummary { minimizers: result.minimizers.clone(), cells: result.cells.len(), unresolved: result.unresolved(), counts };
    let text = serde_json::to_string(&summary).map_err(Exit::internal)?;
    writeln!(std::io::stderr(), "{text}").map_err(Exit::internal)?;
    if summary.unresolved as f64 >= UNRESOLVED_LIMIT * summary.cells as f64 && summary.unresolved > 0 {
        return Err(Exit {
            code: SWEEP_QUALITY,
            message: format!("{} of {} cells unresolved", summary.unresolved, summary.cells),
        });
    }
    Ok(())
}

fn cmd_export(name: &str, out: Option<&Path>) -> Result<(), Exit> {
    let file = turnpike::registry::problem_file(name).ok_or_else(|| {
        Exit { code: INPUT, message: format!("unknown problem '{name}' ({})", turnpike::registry::NAMES.join(", ")) }
    })?;
    io::emit_json(&file, out)
}
