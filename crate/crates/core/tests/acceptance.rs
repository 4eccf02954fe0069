//! Acceptance criteria. Runs sequentially so timings are not disturbed by
//! other tests, prints one PASS/FAIL line per criterion and exits nonzero
//! when any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use termdp::envs::{
    build_hamming_channel, build_maze, build_nonconvex_toy, random_instance, two_route_maze, RandomSpec,
};
use termdp::model::{information_usage, transfer_entropy, Degree, FiniteMdp, DEFAULT_CELL_BUDGET};
use termdp::oracle::suites::trial_rng;
use termdp::oracle::{
    brute_force_policy_search, finite_horizon_value_iteration, objective_landscape_stage1, run_suite, CellClass, Suite,
    SuiteConfig, SuiteOutcome,
};
use termdp::solver::{solve, solve_multistart, SolveOptions, SolveReport};

const DESCENT_TRIALS: usize = 200;
const DESCENT_BUDGET: Duration = Duration::from_secs(60);
const RESIDUAL_BOUND: f64 = 1e-8;

const CLOSED_FORM_TOL: f64 = 1e-9;
const GRID_RESOLUTION: f64 = 1e-3;
const GRID_OBJECTIVE_TOL: f64 = 1e-4;

const LANDSCAPE_RESOLUTION: usize = 101;
const LANDSCAPE_STARTS: usize = 16;
const LANDSCAPE_SEED: u64 = 1;
const LANDSCAPE_GAP: f64 = 1e-3;
const LANDSCAPE_BUDGET: Duration = Duration::from_secs(30);

const IDENTITY_TRIALS: usize = 100;
const CHAIN_TRIALS: usize = 20;

const SCALING_HORIZONS: [usize; 3] = [25, 50, 100];
const SCALING_ITERS: (usize, usize) = (5, 45);
const SCALING_REPEATS: usize = 5;
const DOUBLING_RANGE: (f64, f64) = (1.6, 2.6);
const M_TIME_RATIO: f64 = 1.25;

const SMALL_BETA: f64 = 1e-6;
const VI_RELATIVE_TOL: f64 = 0.01;

const SNAPSHOT_TIME: usize = 25;
const ROUTE_MASS_FLOOR: f64 = 0.6;
const MAZE_BUDGET: Duration = Duration::from_secs(120);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn suite(s: Suite, trials: usize) -> SuiteOutcome {
    run_suite(s, &SuiteConfig { trials: Some(trials), ..SuiteConfig::default() })
}

fn failures(o: &SuiteOutcome) -> String {
    o.failures.iter().take(3).map(|f| format!("seed {}: {}", f.seed, f.message)).collect::<Vec<_>>().join("; ")
}

fn monotone_descent() -> Verdict {
    let o = suite(Suite::Descent, DESCENT_TRIALS);
    let pass = o.passed() && o.trials == DESCENT_TRIALS && o.elapsed < DESCENT_BUDGET;
    verdict(
        pass,
        format!(
            "{} instances, max step increase {:.3e}, {:.1}s {}",
            o.trials,
            o.worst,
            o.elapsed.as_secs_f64(),
            failures(&o)
        ),
    )
}

fn stationarity_certificate() -> Verdict {
    let o = suite(Suite::Residual, DESCENT_TRIALS);
    let converged = o.checks / 2;
    verdict(
        o.passed() && o.worst < RESIDUAL_BOUND,
        format!("{converged}/{} converged, max residual or sweep change {:.9e} {}", o.trials, o.worst, failures(&o)),
    )
}

fn classical_equivalence() -> Verdict {
    let mdp = build_hamming_channel();
    let report = match solve(&mdp, &SolveOptions::new(1.0, 0)) {
        Ok(r) => r,
        Err(e) => return verdict(false, e.to_string()),
    };
    let target = 1.0 / (1.0 + (-1.0f64).exp());
    let policy_err = (0..2).map(|x| (report.policy.row(&mdp, 0, 0, x)[x] - target).abs()).fold(0.0, f64::max);
    let brute = match brute_force_policy_search(&mdp, 1.0, 0, GRID_RESOLUTION) {
        Ok(b) => b,
        Err(e) => return verdict(false, e.to_string()),
    };
    let objective_err = (report.value.total - brute.value.total).abs();
    verdict(
        policy_err < CLOSED_FORM_TOL && objective_err < GRID_OBJECTIVE_TOL,
        format!("policy error {policy_err:.3e}, objective gap to grid search {objective_err:.3e}"),
    )
}

/// First-stage coordinates `theta_x = q_1(u = 0 | x)` of a toy solution.
fn theta(mdp: &FiniteMdp, r: &SolveReport) -> [f64; 2] {
    [r.policy.row(mdp, 0, 0, 0)[0], r.policy.row(mdp, 0, 0, 1)[0]]
}

fn nonconvexity() -> Verdict {
    let start = Instant::now();
    let toy = build_nonconvex_toy();
    let beta = 1.0;
    let grid = match objective_landscape_stage1(&toy, beta, LANDSCAPE_RESOLUTION) {
        Ok(g) => g,
        Err(e) => return verdict(false, e.to_string()),
    };
    let minima = grid.cells(CellClass::Minimum);
    let reports = match solve_multistart(&toy, &SolveOptions::new(beta, 0), LANDSCAPE_STARTS, LANDSCAPE_SEED, 0.5) {
        Ok(r) => r,
        Err(e) => return verdict(false, e.to_string()),
    };

    // distinct limit points: theta differs by more than one grid spacing
    let mut limits: Vec<([f64; 2], f64)> = Vec::new();
    for r in reports.iter().filter(|r| r.converged) {
        let p = theta(&toy, r);
        let close = |q: &[f64; 2]| (p[0] - q[0]).abs().max((p[1] - q[1]).abs()) <= grid.spacing();
        if !limits.iter().any(|(q, _)| close(q)) {
            limits.push((p, r.value.total));
        }
    }
    let near_minimum = |p: &[f64; 2]| {
        let cell = grid.nearest_cell(p);
        minima.iter().any(|&m| grid.cell_distance(cell, m) <= 1)
    };
    let mut best_gap = 0.0f64;
    for (i, (p, fp)) in limits.iter().enumerate() {
        for (q, fq) in &limits[i + 1..] {
            if near_minimum(p) && near_minimum(q) {
                best_gap = best_gap.max((fp - fq).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    let points = limits.iter().map(|(p, f)| format!("({:.3},{:.3})={f:.6}", p[0], p[1])).collect::<Vec<_>>().join(" ");
    verdict(
        minima.len() >= 2 && limits.len() >= 2 && best_gap > LANDSCAPE_GAP && elapsed < LANDSCAPE_BUDGET,
        format!(
            "{} landscape minima, {} distinct limit points [{points}], largest gap between minimum-adjacent limits {best_gap:.3e} (needs > {LANDSCAPE_GAP:e}), {:.1}s",
            minima.len(),
            limits.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn suite_verdict(s: Suite, trials: usize) -> Verdict {
    let o = suite(s, trials);
    verdict(
        o.passed() && o.trials == trials,
        format!("{} trials, {} checks, worst {:.3e} ({}) {}", o.trials, o.checks, o.worst, o.note, failures(&o)),
    )
}

fn fixed_iterations(beta: f64, iters: usize) -> SolveOptions {
    let mut opts = SolveOptions::new(beta, 0);
    opts.max_iters = iters;
    opts.tol_objective = f64::MIN_POSITIVE;
    opts.tol_residual = f64::MIN_POSITIVE;
    opts
}

fn fastest(mdp: &FiniteMdp, opts: &SolveOptions) -> termdp::Result<(f64, SolveReport)> {
    let mut best = f64::INFINITY;
    let mut last = None;
    for _ in 0..SCALING_REPEATS {
        let r = solve(mdp, opts)?;
        best = best.min(r.wall_time.as_secs_f64());
        last = Some(r);
    }
    Ok((best, last.expect("at least one repeat")))
}

/// Seconds per iteration from the difference of two fixed-length solves,
/// which cancels setup and the final evaluation.
fn per_iteration(mdp: &FiniteMdp, beta: f64) -> termdp::Result<(f64, SolveReport)> {
    let (lo, hi) = SCALING_ITERS;
    let (short, _) = fastest(mdp, &fixed_iterations(beta, lo))?;
    let (long, report) = fastest(mdp, &fixed_iterations(beta, hi))?;
    Ok(((long - short) / (hi - lo) as f64, report))
}

fn scaling() -> termdp::Result<Verdict> {
    let mut spec = two_route_maze();
    let mut times = Vec::new();
    for &t in &SCALING_HORIZONS {
        spec.horizon = t;
        let mdp = build_maze(&spec)?;
        times.push(per_iteration(&mdp, 10.0)?.0);
    }
    let ratios: Vec<f64> = times.windows(2).map(|w| w[1] / w[0]).collect();
    let doubling_ok = ratios.iter().all(|r| (DOUBLING_RANGE.0..=DOUBLING_RANGE.1).contains(r));

    // the solver takes no evaluation window; m only enters the transfer
    // entropy computed after the solve
    let mdp = random_instance(RandomSpec::exact(25, 5, 5), &mut trial_rng(8))?;
    let mut m_times = Vec::new();
    let mut policies = Vec::new();
    for m in 0..=2 {
        let (secs, report) = per_iteration(&mdp, 1.0)?;
        transfer_entropy(&mdp, &report.policy, Degree::Finite(m), Degree::Finite(0), DEFAULT_CELL_BUDGET)?;
        m_times.push(secs);
        policies.push(report.policy);
    }
    let spread = m_times.iter().cloned().fold(0.0, f64::max) / m_times.iter().cloned().fold(f64::INFINITY, f64::min);
    let same_policy = policies.windows(2).all(|w| w[0] == w[1]);
    Ok(verdict(
        doubling_ok && spread <= M_TIME_RATIO && same_policy,
        format!(
            "per-iteration ms {:?} for T={SCALING_HORIZONS:?}, doubling ratios {:?}; m in 0..=2 time spread {spread:.3}, identical solves {same_policy}",
            times.iter().map(|s| format!("{:.3}", s * 1e3)).collect::<Vec<_>>(),
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
        ),
    ))
}

fn small_beta() -> termdp::Result<Verdict> {
    let mdp = build_maze(&two_route_maze())?;
    let report = solve(&mdp, &SolveOptions::new(SMALL_BETA, 0))?;
    let vi = finite_horizon_value_iteration(&mdp).optimal_cost;
    let rel = (report.value.expected_cost - vi).abs() / vi.abs();
    Ok(verdict(
        report.converged && rel <= VI_RELATIVE_TOL,
        format!("J {:.6} vs dynamic programming {vi:.6}, relative gap {rel:.3e}", report.value.expected_cost),
    ))
}

fn maze_routes() -> termdp::Result<Verdict> {
    let start = Instant::now();
    let spec = two_route_maze();
    let mdp = build_maze(&spec)?;
    let routes = spec.simple_routes(64)?;
    let corridors = spec.route_corridors(&routes)?;
    let long = (0..routes.len()).max_by_key(|&k| routes[k].len()).expect("maze has routes");
    let short = (0..routes.len()).min_by_key(|&k| routes[k].len()).expect("maze has routes");
    let run = |beta: f64, route: usize| -> termdp::Result<(f64, f64)> {
        let report = solve(&mdp, &SolveOptions::new(beta, 0))?;
        let mu = report.iterate.mu.state_marginal(&mdp, SNAPSHOT_TIME - 1);
        let mass = corridors[route].iter().map(|&c| mu[c]).sum();
        let info = information_usage(&mdp, &report.policy)?.iter().sum();
        Ok((mass, info))
    };
    let (long_mass, info_high_price) = run(10.0, long)?;
    let (short_mass, info_low_price) = run(1.0, short)?;
    let elapsed = start.elapsed();
    Ok(verdict(
        long_mass >= ROUTE_MASS_FLOOR
            && short_mass >= ROUTE_MASS_FLOOR
            && info_low_price > info_high_price
            && elapsed < MAZE_BUDGET,
        format!(
            "{} routes; beta=10 long-route mass {long_mass:.3}; beta=1 short-route mass {short_mass:.3}; information {info_low_price:.3} > {info_high_price:.3} nats; {:.1}s",
            routes.len(),
            elapsed.as_secs_f64()
        ),
    ))
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_termdp"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("TERMDP_")) {
        cmd.env_remove(k);
    }
    let out = cmd.arg("--out-dir").arg(dir).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> =
        std::fs::read_dir(dir).map(|it| it.filter_map(|e| e.ok().map(|e| e.path())).collect()).unwrap_or_default();
    v.sort();
    v
}

fn determinism() -> Verdict {
    let runs: [&[&str]; 5] = [
        &["--beta", "1", "--seed", "7", "--starts", "4", "solve", "--builtin", "toy"],
        &["sweep", "--builtin", "hamming", "--betas", "0.25,1,4"],
        &["landscape", "--resolution", "41"],
        &["maze", "--snapshots", "1,25,56"],
        &["value-iteration", "--builtin", "maze"],
    ];
    let root = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return verdict(false, e.to_string()),
    };
    let mut compared = 0;
    let mut diffs = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        let a = root.path().join(format!("{i}a"));
        let b = root.path().join(format!("{i}b"));
        if let Err(e) = run_cli(&a, args).and_then(|_| run_cli(&b, args)) {
            return verdict(false, e);
        }
        let (fa, fb) = (files(&a), files(&b));
        if fa.iter().map(|p| p.file_name()).ne(fb.iter().map(|p| p.file_name())) {
            diffs.push(format!("{args:?}: different file sets"));
            continue;
        }
        for (x, y) in fa.iter().zip(&fb) {
            compared += 1;
            if std::fs::read(x).ok() != std::fs::read(y).ok() {
                diffs.push(format!("{args:?}: {}", x.display()));
            }
        }
    }
    verdict(
        diffs.is_empty() && compared > 0,
        format!("{compared} output files compared byte for byte {}", diffs.join("; ")),
    )
}

type Check = Box<dyn Fn() -> Verdict>;

fn flatten(r: termdp::Result<Verdict>) -> Verdict {
    r.unwrap_or_else(|e| verdict(false, e.to_string()))
}

fn main() {
    let criteria: Vec<(&str, Check)> = vec![
        ("monotone descent", Box::new(monotone_descent)),
        ("stationarity certificate", Box::new(stationarity_certificate)),
        ("classical-case equivalence", Box::new(classical_equivalence)),
        ("nonconvexity reproduction", Box::new(nonconvexity)),
        ("memory monotonicity", Box::new(|| suite_verdict(Suite::Monotonicity, IDENTITY_TRIALS))),
        ("state-window reduction", Box::new(|| suite_verdict(Suite::Reduction, IDENTITY_TRIALS))),
        ("directed-information chain", Box::new(|| suite_verdict(Suite::Chain, CHAIN_TRIALS))),
        ("iteration-time scaling", Box::new(|| flatten(scaling()))),
        ("small-beta consistency", Box::new(|| flatten(small_beta()))),
        ("maze route preference", Box::new(|| flatten(maze_routes()))),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<28} {} [{:.1}s] {}",
            i + 1,
            name,
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail.trim_end()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
