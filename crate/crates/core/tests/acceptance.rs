//! Acceptance criteria 1 to 10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use turnpike::analysis::{
    bound_violations, dissipativity_check, distance_series, envelope_constant, measure_stat, sweep, SweepConfig,
};
use turnpike::direct::{
    default_intervals, init_orbit, init_turnpike, init_turnpike_multipliers, solve_al_from, transcribe, AlConfig,
    NlpResult, Transcription,
};
use turnpike::exec::{map_indexed, Execution};
use turnpike::expr::{BinOp, Expression, Func, Node, Var};
use turnpike::lq::{split_matrix, LqBvp, LqProblem};
use turnpike::ocp::{
    linearize, static_multistart, static_newton, ControlProblem, SearchBox, StaticExtremal, StaticGuess,
};
use turnpike::registry;
use turnpike::shooting::{shoot, ShootingConfig, ShootingGuess, Variant};
use turnpike::trajectory::Trajectory;

struct Outcome {
    id: usize,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn guess(p: &ControlProblem, x: &[f64], u: f64) -> StaticExtremal {
    static_newton(p, &StaticGuess::new(x, &[u], &vec![0.0; x.len()])).expect("static Newton converges from a close guess")
}

fn direct(p: &ControlProblem, horizon: f64, intervals: usize, e: &StaticExtremal) -> (Transcription, NlpResult) {
    let tr = transcribe(p, horizon, intervals).unwrap();
    let r = solve_al_from(&tr, &init_turnpike(&tr, e), &init_turnpike_multipliers(&tr, e), &AlConfig::default()).unwrap();
    (tr, r)
}

/// Least-squares slope of ys against xs.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn criterion_1() -> Outcome {
    let p = registry::exa();
    let start = Instant::now();
    let r = static_multistart(&p, &SearchBox::cube(2, 3.0), 64, 1, Execution::Parallel).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    // (x̄1, x̄2, ū, λ̄1, λ̄2)
    let printed = [
        ("global", [1.98432, 1.98432, 0.123985, 2.96051, 0.247969]),
        ("loc1", [-1.84987, -1.84987, -1.06922, -14.2535, -2.13844]),
        ("loc2", [0.171094, 0.171094, 0.679368, 3.77714, 1.35874]),
    ];
    let mut worst = 0.0f64;
    let mut matched = 0;
    for (_, want) in &printed {
        let best = r
            .extremals
            .iter()
            .map(|e| {
                let got = [e.x[0], e.x[1], e.u[0], e.lambda[0], e.lambda[1]];
                got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(best);
        if best <= 1e-3 {
            matched += 1;
        }
    }
    let global_first = r.extremals.first().is_some_and(|e| (e.x[0] - 1.98432).abs() <= 1e-3);
    Outcome {
        id: 1,
        title: "static reproduction on exa",
        pass: r.extremals.len() == 3 && matched == 3 && global_first && elapsed < 1.0,
        detail: format!(
            "{} extremals, {matched}/3 matched, worst component error {worst:.2e}, global first {global_first}, {elapsed:.3}s",
            r.extremals.len()
        ),
    }
}

fn criterion_2() -> Outcome {
    let p = registry::cubic1d();
    let r = static_multistart(&p, &SearchBox::cube(1, 3.0), 64, 1, Execution::Parallel).unwrap();
    let mut xs: Vec<f64> = r.extremals.iter().map(|e| e.x[0]).collect();
    xs.sort_by(f64::total_cmp);
    let want = [-1.925, 0.059, 1.961];
    let located = xs.len() == 3 && xs.iter().zip(want).all(|(a, b)| (a - b).abs() <= 5e-3);
    let cost = |x: f64| r.extremals.iter().find(|e| (e.x[0] - x).abs() < 0.1).map(|e| e.f0_value);
    let gap = match (cost(0.059), cost(1.961)) {
        (Some(a), Some(b)) => (a - b).abs(),
        _ => f64::INFINITY,
    };
    Outcome {
        id: 2,
        title: "static reproduction on cubic1d",
        pass: located && gap <= 1e-3,
        detail: format!("extremal states {xs:?}, global cost gap {gap:.2e}"),
    }
}

/// Sup-norm gaps (states, controls) against the closed form.
fn sup_diff(traj: &Trajectory, bvp: &LqBvp) -> (f64, f64) {
    (0..traj.len()).fold((0.0, 0.0), |(sx, su), i| {
        let (x, _, u) = bvp.point(traj.times[i]);
        (sx.max((&traj.states[i] - x).amax()), su.max((&traj.controls[i] - u).amax()))
    })
}

fn criterion_3(drifts: &mut Vec<f64>) -> Outcome {
    let lq = registry::lq_scalar_data();
    let p = registry::lq_scalar();
    let horizon = 10.0;

    let t0 = Instant::now();
    let bvp = LqBvp::solve(&lq, &v(&[0.0]), &v(&[1.0]), horizon).unwrap();
    let residual = bvp.ode_residual(400);
    let t_closed = t0.elapsed().as_secs_f64();

    let e = guess(&p, &[0.0], 0.0);
    let t0 = Instant::now();
    let cfg = ShootingConfig { variant: Variant::Midpoint, ..ShootingConfig::default() };
    let sh = shoot(&p, horizon, &ShootingGuess::from_turnpike(&p, &e), &cfg).unwrap();
    let t_shoot = t0.elapsed().as_secs_f64();
    let (shoot_x, shoot_u) = sh.trajectory.as_ref().map_or((f64::INFINITY, f64::INFINITY), |t| sup_diff(t, &bvp));
    if sh.converged {
        drifts.extend(sh.hamiltonian_drift);
    }

    let t0 = Instant::now();
    let (tr, r) = direct(&p, horizon, default_intervals(horizon), &e);
    let t_direct = t0.elapsed().as_secs_f64();
    let (direct_x, direct_u) = r.trajectory(&tr).map_or((f64::INFINITY, f64::INFINITY), |t| sup_diff(&t, &bvp));

    let pass = sh.converged
        && r.converged
        && shoot_x.max(shoot_u) <= 1e-4
        && direct_x.max(direct_u) <= 1e-4
        && residual <= 1e-8
        && t_closed.max(t_shoot).max(t_direct) < 1.0;
    Outcome {
        id: 3,
        title: "LQ closed form vs shooting vs direct",
        pass,
        detail: format!(
            "shooting gap x {shoot_x:.2e} u {shoot_u:.2e}, direct gap x {direct_x:.2e} u {direct_u:.2e} (N = {}), ODE residual {residual:.2e}, times {t_closed:.3}/{t_shoot:.3}/{t_direct:.3}s",
            tr.intervals()
        ),
    }
}

fn random_lq(rng: &mut ChaCha8Rng) -> (LqProblem, DVector<f64>, DVector<f64>) {
    loop {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=n);
        let mut r = |rows: usize, cols: usize| DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let a = r(n, n);
        let b = r(n, m);
        let g = r(n, n);
        let h = r(m, m);
        let q = &g * g.transpose() + DMatrix::identity(n, n) * 0.1;
        let u = &h * h.transpose() + DMatrix::identity(m, m) * 0.5;
        let xd = r(n, 1).column(0).into_owned();
        let ud = r(m, 1).column(0).into_owned();
        let x0 = r(n, 1).column(0) * 2.0;
        let x1 = r(n, 1).column(0) * 2.0;
        if let Ok(p) = LqProblem::new(a, b, q, u, xd, ud) {
            if LqBvp::solve(&p, &x0, &x1, 5.0).is_ok() {
                return (p, x0, x1);
            }
        }
    }
}

fn lq_distance(bvp: &LqBvp, samples: usize) -> (Vec<f64>, Vec<f64>) {
    let tp = &bvp.turnpike;
    let times = turnpike::trajectory::uniform_grid(bvp.horizon, samples);
    let d = times
        .iter()
        .map(|&t| {
            let (x, l, u) = bvp.point(t);
            (x - &tp.x).norm() + (u - &tp.u).norm() + (l - &tp.lambda).norm() * 2.0
        })
        .collect();
    (times, d)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let problems: Vec<_> = (0..50).map(|_| random_lq(&mut rng)).collect();
    let results = map_indexed(problems.len(), Execution::Parallel, |k| {
        let (p, x0, x1) = &problems[k];
        let fitted = LqBvp::solve(p, x0, x1, 5.0).unwrap();
        let nu = fitted.splitting.nu;
        let (times, d) = lq_distance(&fitted, 1001);
        let c = envelope_constant(&times, &d, 5.0, nu);
        let mut violations = 0;
        let mut worst: f64 = 0.0;
        for horizon in [10.0, 20.0] {
            match LqBvp::solve(p, x0, x1, horizon) {
                Ok(bvp) => {
                    let (times, d) = lq_distance(&bvp, (200.0 * horizon) as usize + 1);
                    violations += bound_violations(&times, &d, horizon, c, nu, 0.05);
                    for (t, di) in times.iter().zip(&d) {
                        worst = worst.max(di / (c * ((-nu * t).exp() + (-nu * (horizon - t)).exp())));
                    }
                }
                Err(_) => violations += 1,
            }
        }
        (violations, worst)
    });
    let failing = results.iter().filter(|r| r.0 > 0).count();
    let total: usize = results.iter().map(|r| r.0).sum();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let elapsed = start.elapsed().as_secs_f64();
    Outcome {
        id: 4,
        title: "T-uniform constant on random LQ problems",
        pass: total == 0 && elapsed < 30.0,
        detail: format!("{failing}/50 problems with violations ({total} samples beyond 5% slack, worst d/bound {worst:.2}), {elapsed:.2}s"),
    }
}

fn criterion_5() -> Outcome {
    let horizons = [5.0, 10.0, 20.0, 40.0];
    let halves: Vec<f64> = horizons.iter().map(|t| 0.5 * t).collect();

    let lq = registry::lq_scalar_data();
    let lq_nu = 2f64.sqrt();
    let lq_logs: Vec<f64> = horizons
        .iter()
        .map(|&t| {
            let bvp = LqBvp::solve(&lq, &v(&[0.0]), &v(&[1.0]), t).unwrap();
            let tp = &bvp.turnpike;
            let (x, l, u) = bvp.point(0.5 * t);
            ((x - &tp.x).norm() + (u - &tp.u).norm() + (l - &tp.lambda).norm() * 2.0).ln()
        })
        .collect();
    let lq_slope = slope(&halves, &lq_logs);

    let p = registry::exa();
    let e = guess(&p, &[2.0, 2.0], 0.1);
    let exa_nu = split_matrix(&linearize(&p, &e).unwrap().extremal_matrix().unwrap()).unwrap().nu;
    let mut converged = true;
    let exa_logs: Vec<f64> = horizons
        .iter()
        .map(|&t| {
            let (tr, r) = direct(&p, t, default_intervals(t), &e);
            converged &= r.converged;
            let traj = r.trajectory(&tr).unwrap();
            distance_series(&traj, &e).unwrap()[tr.nearest_node(0.5 * t)].ln()
        })
        .collect();
    let exa_slope = slope(&halves, &exa_logs);

    let ok = |s: f64, nu: f64| (s + nu).abs() <= 0.1 * nu;
    Outcome {
        id: 5,
        title: "midpoint decay slope",
        pass: converged && ok(lq_slope, lq_nu) && ok(exa_slope, exa_nu),
        detail: format!(
            "lq-scalar slope {lq_slope:.4} vs -{lq_nu:.4}; exa slope {exa_slope:.4} vs -{exa_nu:.4} (log d(T/2) against T/2)"
        ),
    }
}

fn criterion_6(drifts: &mut Vec<f64>) -> Outcome {
    let p = registry::exa();
    let e = guess(&p, &[2.0, 2.0], 0.1);
    let start = Instant::now();
    let cfg = ShootingConfig { variant: Variant::Midpoint, ..ShootingConfig::default() };
    let mid = shoot(&p, 20.0, &ShootingGuess::from_turnpike(&p, &e), &cfg);
    let (mid_ok, mid_detail) = match &mid {
        Ok(r) => {
            if r.converged {
                drifts.extend(r.hamiltonian_drift);
            }
            (
                r.converged && r.iterations <= 15,
                format!("midpoint converged {} in {} iterations (residual {:.2e}, {:?})", r.converged, r.iterations, r.residual_norm, r.failure),
            )
        }
        Err(err) => (false, format!("midpoint error: {err}")),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let guesses: Vec<DVector<f64>> = (0..20).map(|_| DVector::from_fn(2, |_, _| rng.random_range(-10.0..10.0))).collect();
    let classic = map_indexed(guesses.len(), Execution::Parallel, |k| {
        let mut g = ShootingGuess::from_turnpike(&p, &e);
        g.z.lambda = guesses[k].clone();
        shoot(&p, 20.0, &g, &ShootingConfig::classic()).ok().filter(|r| r.converged)
    });
    let failures = classic.iter().filter(|r| r.is_none()).count();
    for r in classic.iter().flatten() {
        drifts.extend(r.hamiltonian_drift);
    }
    let elapsed = start.elapsed().as_secs_f64();
    Outcome {
        id: 6,
        title: "midpoint vs classic shooting on exa, T = 20",
        pass: mid_ok && failures * 2 > guesses.len() && elapsed < 10.0,
        detail: format!("{mid_detail}; classic failed {failures}/20; {elapsed:.2}s"),
    }
}

fn criterion_7() -> Outcome {
    let p = registry::circle();
    let start = Instant::now();
    let e = guess(&p, &[0.5, 0.0], 0.5);
    let (tr, local) = direct(&p, 100.0, 2000, &e);
    let global = solve_al_from(&tr, &init_orbit(&tr, 3.0).unwrap(), &DVector::zeros(tr.n_constraints()), &AlConfig::default())
        .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let distinct = (&local.w - &global.w).amax() > 0.1;
    let ordered = global.objective < local.objective;
    let within = |c: f64, reference: f64| (c - reference).abs() <= 0.1 * reference;
    let radius_dev = (0..tr.nodes())
        .filter(|&i| (10.0..=90.0).contains(&tr.times()[i]))
        .map(|i| (tr.node(&global.w, i).0.norm() - 3.0).abs())
        .fold(0.0, f64::max);
    let pass = local.converged
        && global.converged
        && distinct
        && ordered
        && within(global.objective, 45.6722)
        && within(local.objective, 52.3983)
        && radius_dev <= 0.1
        && elapsed < 60.0;
    Outcome {
        id: 7,
        title: "circle example, T = 100",
        pass,
        detail: format!(
            "local cost {:.4} (reference 52.3983), global cost {:.4} (reference 45.6722), distinct {distinct}, global < local {ordered}, max radius deviation on [10, 90] {radius_dev:.3e}, {elapsed:.2}s",
            local.objective, global.objective
        ),
    }
}

fn cubic_minimizers() -> Vec<StaticExtremal> {
    let p = registry::cubic1d();
    [0.06, 1.96, -1.93].iter().map(|g| guess(&p, &[*g], 0.0)).collect()
}

fn criterion_8() -> Outcome {
    let p = registry::cubic1d();
    let ex = cubic_minimizers();
    let start = Instant::now();
    let x0s: Vec<DVector<f64>> = (0..=20).map(|k| v(&[1.1 + 0.005 * k as f64])).collect();
    let r = sweep(&p, &x0s, &[v(&[1.0])], &ex, &SweepConfig::new(2.0)).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let label_of = |x: f64| r.minimizers.iter().position(|m| (m[0] - x).abs() < 0.05);
    let (low, high) = (label_of(0.059), label_of(1.961));
    let labels: Vec<Option<usize>> = r.cells.iter().map(|c| c.label).collect();
    let switch = labels.windows(2).position(|w| w[0] == low && w[1] == high);
    let single = labels.iter().filter(|l| **l != low && **l != high).count() == 0
        && labels.windows(2).filter(|w| w[0] != w[1]).count() == 1;
    let (pass, bracket) = match switch {
        Some(k) => {
            let (a, b) = (r.cells[k].x0[0], r.cells[k + 1].x0[0]);
            (single && a >= 1.16 - 1e-12 && b <= 1.17 + 1e-12 && elapsed < 60.0, format!("({a:.3}, {b:.3})"))
        }
        None => (false, "none".to_string()),
    };
    Outcome {
        id: 8,
        title: "cubic1d bifurcation in x0",
        pass,
        detail: format!("switch from x = 0.059 to x = 1.961 turnpike at x0 in {bracket}, single switch {single}, {elapsed:.2}s"),
    }
}

/// Random expression over (x1, x2, u1) whose every subterm stays in domain.
fn random_node(rng: &mut ChaCha8Rng, depth: usize) -> Node {
    let leaf = |rng: &mut ChaCha8Rng| match rng.random_range(0..4) {
        0 => Node::Const(rng.random_range(-2.0..2.0)),
        1 => Node::Var(Var::State(0)),
        2 => Node::Var(Var::State(1)),
        _ => Node::Var(Var::Control(0)),
    };
    if depth == 0 {
        return leaf(rng);
    }
    let sub = |rng: &mut ChaCha8Rng| Box::new(random_node(rng, depth - 1));
    // 1 + a² keeps log, sqrt, division and real powers well defined
    let positive = |a: Box<Node>| {
        Box::new(Node::Binary(BinOp::Add, Box::new(Node::Const(1.0)), Box::new(Node::Pow(a, 2.0))))
    };
    match rng.random_range(0..12) {
        0 => leaf(rng),
        1 => Node::Binary(BinOp::Add, sub(rng), sub(rng)),
        2 => Node::Binary(BinOp::Sub, sub(rng), sub(rng)),
        3 | 4 => Node::Binary(BinOp::Mul, sub(rng), sub(rng)),
        5 => Node::Binary(BinOp::Div, sub(rng), positive(sub(rng))),
        6 => Node::Neg(sub(rng)),
        7 => Node::Pow(sub(rng), [2.0, 3.0][rng.random_range(0..2)]),
        8 => Node::Pow(positive(sub(rng)), [0.5, -1.5][rng.random_range(0..2)]),
        9 => Node::Call([Func::Sin, Func::Cos, Func::Tanh][rng.random_range(0..3)], sub(rng)),
        10 => Node::Call([Func::Log, Func::Sqrt][rng.random_range(0..2)], positive(sub(rng))),
        _ => Node::Call(Func::Exp, Box::new(Node::Call(Func::Tanh, sub(rng)))),
    }
}

fn gradient_check() -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 1000 {
        let depth = rng.random_range(1..=4);
        let Some(e) = Expression::from_node(random_node(&mut rng, depth), 2, 1) else { continue };
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let u = [rng.random_range(-1.0..1.0)];
        for var in [Var::State(0), Var::State(1), Var::Control(0)] {
            let Ok(sym) = e.differentiate(var).eval(&x, &u) else { continue };
            let k = var.stacked_index(2);
            let h = 1e-5;
            let at = |s: f64| {
                let mut z = [x[0], x[1], u[0]];
                z[k] += s;
                e.eval(&z[..2], &z[2..])
            };
            let (Ok(fp), Ok(fm)) = (at(h), at(-h)) else { continue };
            let fd = (fp - fm) / (2.0 * h);
            worst = worst.max((sym - fd).abs() / sym.abs().max(1.0));
        }
        checked += 1;
    }
    (checked, worst)
}

fn cn_order() -> (f64, f64) {
    let lq = registry::lq_scalar_data();
    let p = registry::lq_scalar();
    let e = guess(&p, &[0.0], 0.0);
    let bvp = LqBvp::solve(&lq, &v(&[0.0]), &v(&[1.0]), 10.0).unwrap();
    let err = |n: usize| {
        let (tr, r) = direct(&p, 10.0, n, &e);
        let traj = r.trajectory(&tr).unwrap();
        (0..traj.len()).map(|i| (traj.states[i][0] - bvp.point(traj.times[i]).0[0]).abs()).fold(0.0, f64::max)
    };
    let (e1, e2, e3) = (err(100), err(200), err(400));
    (e1 / e2, e2 / e3)
}

fn criterion_9(drifts: &[f64]) -> Outcome {
    let (count, grad_err) = gradient_check();
    let grad_ok = count == 1000 && grad_err <= 1e-6;

    let drift = drifts.iter().cloned().fold(0.0, f64::max);
    let drift_ok = !drifts.is_empty() && drift <= 1e-5;

    let (r1, r2) = cn_order();
    let order_ok = (3.2..=4.8).contains(&r1) && (3.2..=4.8).contains(&r2);

    let lq = registry::lq_scalar_data();
    let p = registry::lq_scalar();
    let e = guess(&p, &[0.0], 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut dissip = 0.0f64;
    for _ in 0..10 {
        let (x0, x1) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let bvp = LqBvp::solve(&lq, &v(&[x0]), &v(&[x1]), 10.0).unwrap();
        dissip = dissip.max(dissipativity_check(&bvp.trajectory(4001), &p, &e).unwrap().violation);
    }
    let dissip_ok = dissip <= 1e-6;

    let exa = registry::exa();
    let eg = guess(&exa, &[2.0, 2.0], 0.1);
    let (tr, r) = direct(&exa, 20.0, default_intervals(20.0), &eg);
    let traj = r.trajectory(&tr).unwrap();
    let eps: Vec<f64> = (0..40).map(|k| 1e-4 * 1.4f64.powi(k)).collect();
    let lambdas: Vec<f64> = eps.iter().map(|&x| measure_stat(&traj, &eg, x).unwrap()).collect();
    let monotone = lambdas.windows(2).all(|w| w[1] <= w[0]);

    Outcome {
        id: 9,
        title: "property suites",
        pass: grad_ok && drift_ok && order_ok && dissip_ok && monotone,
        detail: format!(
            "{count} expressions, worst gradient error {grad_err:.2e}; max H drift {drift:.2e} over {} shooting solves; CN ratios {r1:.3}, {r2:.3}; LQ dissipativity violation {dissip:.2e}; measure monotone {monotone}",
            drifts.len()
        ),
    }
}

/// Best of the turnpike-initialized direct solves with free x(T), labelled
/// by the nearest static minimizer at T/2.
fn free_end_label(p: &ControlProblem, horizon: f64, minimizers: &[StaticExtremal]) -> Option<f64> {
    let tr = transcribe(p, horizon, default_intervals(horizon).max(100)).ok()?;
    let best = minimizers
        .iter()
        .filter_map(|e| solve_al_from(&tr, &init_turnpike(&tr, e), &init_turnpike_multipliers(&tr, e), &AlConfig::default()).ok())
        .filter(|r| r.converged)
        .min_by(|a, b| a.objective.total_cmp(&b.objective))?;
    let mid = tr.node(&best.w, tr.nearest_node(0.5 * horizon)).0[0];
    minimizers.iter().map(|e| e.x[0]).min_by(|a, b| (a - mid).abs().total_cmp(&(b - mid).abs()))
}

fn criterion_10() -> Outcome {
    let p = registry::problem_file("cubic1d-free-neg").unwrap().to_problem().unwrap();
    let ex = cubic_minimizers();
    let horizons: Vec<f64> = (1..=16).map(|k| 0.25 * k as f64).collect();
    let labels: Vec<Option<f64>> = horizons.iter().map(|&t| free_end_label(&p, t, &ex)).collect();
    let is_local = |l: &Option<f64>| l.is_some_and(|x| (x + 1.925).abs() < 0.05);
    let is_global = |l: &Option<f64>| l.is_some_and(|x| (x - 0.059).abs() < 0.05 || (x - 1.961).abs() < 0.05);
    let switch = labels.windows(2).position(|w| is_local(&w[0]) && is_global(&w[1]));
    let stays = switch.is_some_and(|k| labels[k + 1..].iter().all(is_global) && labels[..=k].iter().all(is_local));
    let bracket = switch.map_or("none".to_string(), |k| format!("({}, {})", horizons[k], horizons[k + 1]));
    Outcome {
        id: 10,
        title: "qualitative local-to-global switch in T (x0 = -2, x(T) free)",
        pass: stays,
        detail: format!("switch at T in {bracket}; the reference bracket [2.3, 2.31] is excluded from quantitative acceptance"),
    }
}

fn main() {
    let mut drifts = Vec::new();
    let outcomes = vec![
        criterion_1(),
        criterion_2(),
        criterion_3(&mut drifts),
        criterion_4(),
        criterion_5(),
        criterion_6(&mut drifts),
        criterion_7(),
        criterion_8(),
        criterion_9(&drifts),
        criterion_10(),
    ];
    for o in &outcomes {
        println!("criterion {:>2} {}: {} | {}", o.id, if o.pass { "PASS" } else { "FAIL" }, o.title, o.detail);
    }
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!("acceptance: {}/{} criteria pass", outcomes.len() - failed.len(), outcomes.len());
    if !failed.is_empty() {
        println!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
