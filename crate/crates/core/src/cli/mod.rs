//! Command-line interface. Every flag can also be set through an
//! environment variable named `TERMDP_<FLAG>`, e.g. `TERMDP_BETA`.

pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::envs::{build_hamming_channel, build_maze, build_nonconvex_toy, load_instance, two_route_maze, MazeSpec};
use crate::error::{Error, Result};
use crate::model::{
    directed_information_of, information_usage, transfer_entropy, Degree, FiniteMdp, DEFAULT_CELL_BUDGET,
};
use crate::oracle::{
    bellman_landscape_stage2, finite_horizon_value_iteration, objective_landscape_stage1, rate_bound_report, run_suite,
    sig12, CellClass, LandscapeGrid, RateInput, Suite, SuiteConfig, SuiteOutcome,
};
use crate::solver::{solve, SolveOptions, SolveReport};
use output::{
    bits, csv_error, csv_writer, output_path, write_information_csv, write_json, write_policy_csv, write_snapshot_csv,
    ROUTES_HEADER, TRADEOFF_HEADER, VI_POLICY_HEADER,
};

/// Exit code of a verification run with failing suites.
pub const EXIT_VERIFY_FAILED: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "termdp", version, about = "Transfer-entropy-regularized MDP solver")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Information price beta (> 0).
    #[arg(long, global = true, env = "TERMDP_BETA")]
    pub beta: Option<f64>,
    /// Control memory n of the policy.
    #[arg(long, global = true, default_value_t = 0, env = "TERMDP_DEGREE_N")]
    pub degree_n: usize,
    /// State memory m of the reported transfer entropy (evaluation only; a
    /// nonnegative integer or `inf`).
    #[arg(long, global = true, default_value = "0", env = "TERMDP_DEGREE_M")]
    pub degree_m: Degree,
    #[arg(long, global = true, default_value_t = 10_000, env = "TERMDP_MAX_ITERS")]
    pub max_iters: usize,
    /// Relative objective-change tolerance of the stopping rule.
    #[arg(long, global = true, default_value_t = 1e-10, env = "TERMDP_TOL")]
    pub tol: f64,
    /// Policy-change tolerance of the stopping rule.
    #[arg(long, global = true, default_value_t = 1e-8, env = "TERMDP_TOL_RESIDUAL")]
    pub tol_residual: f64,
    /// Seed of the perturbed initial policy (uniform start when absent and
    /// `--starts 1`); multi-start uses `seed, seed + 1, ...`.
    #[arg(long, global = true, env = "TERMDP_SEED")]
    pub seed: Option<u64>,
    /// Number of perturbed starts; the lowest objective wins.
    #[arg(long, global = true, default_value_t = 1, env = "TERMDP_STARTS")]
    pub starts: usize,
    /// Size of the initial perturbation, in (0, 1).
    #[arg(long, global = true, default_value_t = 0.5, env = "TERMDP_MAGNITUDE")]
    pub magnitude: f64,
    #[arg(long, global = true, default_value = ".", env = "TERMDP_OUT_DIR")]
    pub out_dir: PathBuf,
    /// Print information in bits instead of nats.
    #[arg(long, global = true, env = "TERMDP_BITS")]
    pub bits: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance; writes report.json and policy.csv.
    Solve(SourceArgs),
    /// Solve over a list of betas; writes tradeoff.csv and rate_bounds.csv.
    Sweep(SweepArgs),
    /// Landscapes of the two-step instance; writes stage2.csv and stage1.csv.
    Landscape(LandscapeArgs),
    /// Solve a maze; writes state snapshots, information.csv and routes.csv.
    Maze(MazeArgs),
    /// Cost-only optimum by dynamic programming (the beta = 0 baseline).
    ValueIteration(SourceArgs),
    /// Run the seeded property suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    /// Two-step binary instance with a nonconvex objective.
    Toy,
    /// One-step binary Hamming channel.
    Hamming,
    /// The shipped two-route maze.
    Maze,
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// Instance file (JSON).
    #[arg(required_unless_present = "builtin")]
    pub instance: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "instance")]
    pub builtin: Option<Builtin>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Comma-separated betas.
    #[arg(long, value_delimiter = ',', required_unless_present = "beta_range", env = "TERMDP_BETAS")]
    pub betas: Vec<f64>,
    /// Log-spaced betas `low:high:count`.
    #[arg(long, conflicts_with = "betas")]
    pub beta_range: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct LandscapeArgs {
    /// Grid points per axis (at least 11).
    #[arg(long, default_value_t = 101)]
    pub resolution: usize,
}

#[derive(Debug, Clone, Args)]
pub struct MazeArgs {
    /// Maze file (JSON); the shipped maze when absent.
    pub maze: Option<PathBuf>,
    /// Horizon override.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Snapshot times, counted from 1.
    #[arg(long, value_delimiter = ',', default_value = "25")]
    pub snapshots: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// `all`, `quick` (a few trials per suite), or comma-separated suite names.
    #[arg(long, default_value = "all")]
    pub scope: String,
    /// Trials per suite, overriding the defaults.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Damage one transition row per instance in the validation suite.
    #[arg(long)]
    pub corrupt_transition: bool,
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let c = &cli.common;
    match &cli.command {
        Command::Solve(source) => cmd_solve(c, source, out),
        Command::Sweep(args) => cmd_sweep(c, args, out),
        Command::Landscape(args) => cmd_landscape(c, args, out),
        Command::Maze(args) => cmd_maze(c, args, out),
        Command::ValueIteration(source) => cmd_value_iteration(c, source, out),
        Command::Verify(args) => cmd_verify(c, args, out),
    }
}

fn load_source(source: &SourceArgs) -> Result<(String, FiniteMdp)> {
    match (&source.instance, source.builtin) {
        (_, Some(Builtin::Toy)) => Ok(("builtin:toy".into(), build_nonconvex_toy())),
        (_, Some(Builtin::Hamming)) => Ok(("builtin:hamming".into(), build_hamming_channel())),
        (_, Some(Builtin::Maze)) => Ok(("builtin:maze".into(), build_maze(&two_route_maze())?)),
        (Some(path), None) => Ok((path.display().to_string(), load_instance(path)?)),
        (None, None) => Err(Error::invalid("an instance file or --builtin is required")),
    }
}

fn require_beta(c: &Common, default: Option<f64>) -> Result<f64> {
    let beta = c.beta.or(default).ok_or_else(|| Error::invalid("--beta is required"))?;
    check_positive_beta(beta)?;
    Ok(beta)
}

fn check_positive_beta(beta: f64) -> Result<()> {
    if beta == 0.0 {
        return Err(Error::invalid(
            "beta must be positive; use the value-iteration subcommand for the beta = 0 baseline",
        ));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be positive and finite, got {beta}")));
    }
    Ok(())
}

fn solve_options(c: &Common, beta: f64) -> SolveOptions {
    let mut opts = SolveOptions::new(beta, c.degree_n);
    opts.max_iters = c.max_iters;
    opts.tol_objective = c.tol;
    opts.tol_residual = c.tol_residual;
    opts
}

/// One start of a multi-start run.
#[derive(Debug, Clone, Serialize)]
pub struct StartSummary {
    /// `None` for the uniform start.
    pub seed: Option<u64>,
    pub total: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs the starts requested by the common flags and returns every report
/// with its seed, in seed order.
pub fn run_starts(mdp: &FiniteMdp, c: &Common, opts: &SolveOptions) -> Result<Vec<(Option<u64>, SolveReport)>> {
    if c.starts == 0 {
        return Err(Error::invalid("--starts must be at least 1"));
    }
    if c.starts == 1 && c.seed.is_none() {
        return Ok(vec![(None, solve(mdp, opts)?)]);
    }
    let base = c.seed.unwrap_or(0);
    (0..c.starts as u64)
        .into_par_iter()
        .map(|i| {
            let seed = base.wrapping_add(i);
            solve(mdp, &opts.clone().seeded(seed, c.magnitude)).map(|r| (Some(seed), r))
        })
        .collect()
}

fn best_of(runs: &[(Option<u64>, SolveReport)]) -> (Option<u64>, &SolveReport) {
    let mut best = &runs[0];
    for r in &runs[1..] {
        if r.1.value.total < best.1.value.total {
            best = r;
        }
    }
    (best.0, &best.1)
}

fn summaries(runs: &[(Option<u64>, SolveReport)]) -> Vec<StartSummary> {
    runs.iter()
        .map(|(seed, r)| StartSummary {
            seed: *seed,
            total: r.value.total,
            residual: r.residual,
            iterations: r.iterations,
            converged: r.converged,
        })
        .collect()
}

/// Contents of `report.json`.
#[derive(Debug, Serialize)]
pub struct ReportFile<'a> {
    pub instance: String,
    pub best_seed: Option<u64>,
    pub information_bits: f64,
    /// Transfer entropy with state memory `degree_m`, when it differs from
    /// the reduced evaluation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<Evaluation>,
    pub starts: Vec<StartSummary>,
    pub report: &'a SolveReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub degree_m: Degree,
    pub degree_n: usize,
    pub information_nats: f64,
    pub information_bits: f64,
}

fn evaluation(mdp: &FiniteMdp, c: &Common, report: &SolveReport) -> Result<Option<Evaluation>> {
    if c.degree_m == Degree::Finite(0) {
        return Ok(None);
    }
    let i = transfer_entropy(mdp, &report.policy, c.degree_m, Degree::Finite(c.degree_n), DEFAULT_CELL_BUDGET)?;
    Ok(Some(Evaluation { degree_m: c.degree_m, degree_n: c.degree_n, information_nats: i, information_bits: bits(i) }))
}

fn info_display(c: &Common, nats: f64) -> String {
    if c.bits {
        format!("{} bits", sig12(bits(nats)))
    } else {
        format!("{} nats", sig12(nats))
    }
}

fn print_summary(out: &mut dyn Write, c: &Common, r: &SolveReport) -> Result<()> {
    writeln!(out, "J        {}", sig12(r.value.expected_cost))?;
    writeln!(out, "I        {}", info_display(c, r.value.information))?;
    writeln!(out, "total    {}", sig12(r.value.total))?;
    writeln!(out, "residual {}", sig12(r.residual))?;
    writeln!(out, "iters    {} (converged: {})", r.iterations, r.converged)?;
    Ok(())
}

fn write_report(
    dir: &Path,
    instance: String,
    mdp: &FiniteMdp,
    c: &Common,
    runs: &[(Option<u64>, SolveReport)],
) -> Result<Option<Evaluation>> {
    let (best_seed, best) = best_of(runs);
    let eval = evaluation(mdp, c, best)?;
    let file = ReportFile {
        instance,
        best_seed,
        information_bits: bits(best.value.information),
        evaluation: eval.clone(),
        starts: summaries(runs),
        report: best,
    };
    write_json(&output_path(dir, "report.json")?, &file)?;
    write_policy_csv(&output_path(dir, "policy.csv")?, mdp, &best.policy)?;
    Ok(eval)
}

fn cmd_solve(c: &Common, source: &SourceArgs, out: &mut dyn Write) -> Result<i32> {
    let beta = require_beta(c, None)?;
    let (name, mdp) = load_source(source)?;
    let opts = solve_options(c, beta);
    opts.validate()?;
    let runs = run_starts(&mdp, c, &opts)?;
    let eval = write_report(&c.out_dir, name, &mdp, c, &runs)?;
    let (seed, best) = best_of(&runs);
    if let Some(s) = seed {
        writeln!(out, "seed     {s}")?;
    }
    print_summary(out, c, best)?;
    if let Some(e) = eval {
        writeln!(out, "I(m={},n={}) {}", e.degree_m, e.degree_n, info_display(c, e.information_nats))?;
    }
    Ok(0)
}

/// Betas, memory degrees and solve options of a sweep.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub betas: Vec<f64>,
    pub degree_m: Degree,
    pub degree_n: usize,
    pub starts: usize,
    pub seed: Option<u64>,
    pub options: SolveOptions,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::invalid("a sweep needs at least one beta"));
        }
        for &b in &self.betas {
            check_positive_beta(b)?;
        }
        if self.starts == 0 {
            return Err(Error::invalid("--starts must be at least 1"));
        }
        Ok(())
    }
}

/// `low:high:count` as log-spaced values.
pub fn log_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::invalid(format!("beta range must be low:high:count, got '{spec}'"));
    let [lo, hi, n] = parts.as_slice() else {
        return Err(bad());
    };
    let lo: f64 = lo.parse().map_err(|_| bad())?;
    let hi: f64 = hi.parse().map_err(|_| bad())?;
    let n: usize = n.parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi >= lo) || n == 0 {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi / lo).ln() / (n - 1) as f64;
    Ok((0..n).map(|i| if i == n - 1 { hi } else { lo * (step * i as f64).exp() }).collect())
}

/// One row of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub beta: f64,
    pub outcome: std::result::Result<SweepPoint, String>,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub expected_cost: f64,
    pub information: f64,
    pub total: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub best_seed: Option<u64>,
    pub directed: Option<f64>,
}

/// Solves every beta of `spec` concurrently; failures are kept per row.
pub fn run_sweep(mdp: &FiniteMdp, spec: &SweepSpec, c: &Common) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut betas = spec.betas.clone();
    betas.sort_by(f64::total_cmp);
    let rows = betas
        .par_iter()
        .map(|&beta| {
            let mut opts = spec.options.clone();
            opts.beta = beta;
            let point = run_starts(mdp, c, &opts).and_then(|runs| {
                let (seed, best) = best_of(&runs);
                let information = if spec.degree_m == Degree::Finite(0) {
                    best.value.information
                } else {
                    transfer_entropy(
                        mdp,
                        &best.policy,
                        spec.degree_m,
                        Degree::Finite(spec.degree_n),
                        DEFAULT_CELL_BUDGET,
                    )?
                };
                Ok(SweepPoint {
                    expected_cost: best.value.expected_cost,
                    information,
                    total: best.value.total,
                    residual: best.residual,
                    iterations: best.iterations,
                    converged: best.converged,
                    best_seed: seed,
                    directed: directed_information_of(mdp, &best.policy).ok(),
                })
            });
            SweepRow { beta, outcome: point.map_err(|e| e.to_string()) }
        })
        .collect();
    Ok(rows)
}

fn cmd_sweep(c: &Common, args: &SweepArgs, out: &mut dyn Write) -> Result<i32> {
    let (_, mdp) = load_source(&args.source)?;
    let betas = match &args.beta_range {
        Some(r) => log_range(r)?,
        None => args.betas.clone(),
    };
    let options = solve_options(c, betas.first().copied().unwrap_or(1.0));
    let spec = SweepSpec { betas, degree_m: c.degree_m, degree_n: c.degree_n, starts: c.starts, seed: c.seed, options };
    let rows = run_sweep(&mdp, &spec, c)?;

    let mut w = csv_writer(&output_path(&c.out_dir, "tradeoff.csv")?)?;
    w.write_record(TRADEOFF_HEADER).map_err(csv_error)?;
    let mut prev: Option<&SweepPoint> = None;
    for row in &rows {
        match &row.outcome {
            Ok(p) => {
                // information should fall and cost rise with beta
                let flag = prev
                    .is_some_and(|q| p.information > q.information + 1e-9 || p.expected_cost < q.expected_cost - 1e-9);
                w.write_record([
                    sig12(row.beta),
                    sig12(p.expected_cost),
                    sig12(p.information),
                    sig12(bits(p.information)),
                    sig12(p.total),
                    sig12(p.residual),
                    p.iterations.to_string(),
                    p.converged.to_string(),
                    p.best_seed.map(|s| s.to_string()).unwrap_or_default(),
                    if flag { "nonmonotone".into() } else { String::new() },
                    String::new(),
                ])
                .map_err(csv_error)?;
                writeln!(
                    out,
                    "beta {}  J {}  I {}  total {}{}",
                    sig12(row.beta),
                    sig12(p.expected_cost),
                    info_display(c, p.information),
                    sig12(p.total),
                    if flag { "  (nonmonotone)" } else { "" }
                )?;
                prev = Some(p);
            }
            Err(e) => {
                let mut rec = vec![sig12(row.beta)];
                rec.extend(std::iter::repeat_n(String::new(), TRADEOFF_HEADER.len() - 2));
                rec.push(e.clone());
                w.write_record(&rec).map_err(csv_error)?;
                writeln!(out, "beta {}  failed: {e}", sig12(row.beta))?;
            }
        }
    }
    w.flush()?;

    let inputs: Vec<RateInput> = rows
        .iter()
        .filter_map(|r| {
            r.outcome.as_ref().ok().map(|p| RateInput {
                beta: r.beta,
                expected_cost: p.expected_cost,
                information: p.information,
                directed: p.directed,
            })
        })
        .collect();
    let report = rate_bound_report(&inputs);
    report.write_csv(std::fs::File::create(output_path(&c.out_dir, "rate_bounds.csv")?)?)?;
    Ok(0)
}

fn class_counts(grid: &LandscapeGrid) -> String {
    format!(
        "{} minima, {} saddles, {} maxima",
        grid.cells(CellClass::Minimum).len(),
        grid.cells(CellClass::Saddle).len(),
        grid.cells(CellClass::Maximum).len()
    )
}

fn cmd_landscape(c: &Common, args: &LandscapeArgs, out: &mut dyn Write) -> Result<i32> {
    let beta = require_beta(c, Some(1.0))?;
    let toy = build_nonconvex_toy();
    let stage2 = bellman_landscape_stage2(&toy, beta, args.resolution)?;
    let stage1 = objective_landscape_stage1(&toy, beta, args.resolution)?;
    stage2.write_csv(std::fs::File::create(output_path(&c.out_dir, "stage2.csv")?)?)?;
    stage1.write_csv(std::fs::File::create(output_path(&c.out_dir, "stage1.csv")?)?)?;
    writeln!(out, "stage2: {} points, {}", stage2.values.len(), class_counts(&stage2))?;
    writeln!(out, "stage1: {} points, {}", stage1.values.len(), class_counts(&stage1))?;
    for cell in stage1.cells(CellClass::Minimum) {
        let p = stage1.coordinates(cell);
        writeln!(
            out,
            "  minimum at theta0={} theta1={} value {}",
            sig12(p[0]),
            sig12(p[1]),
            sig12(stage1.values[cell])
        )?;
    }
    Ok(0)
}

/// Mass of `mu` on each route corridor of `spec`.
pub fn route_masses(spec: &MazeSpec, probs: &[f64]) -> Result<Vec<(usize, usize, f64)>> {
    let routes = spec.simple_routes(64)?;
    let corridors = spec.route_corridors(&routes)?;
    Ok(routes
        .iter()
        .zip(&corridors)
        .map(|(r, cells)| (r.len(), cells.len(), cells.iter().map(|&x| probs[x]).sum()))
        .collect())
}

fn cmd_maze(c: &Common, args: &MazeArgs, out: &mut dyn Write) -> Result<i32> {
    let beta = require_beta(c, Some(10.0))?;
    let (name, mut spec) = match &args.maze {
        Some(path) => (path.display().to_string(), MazeSpec::load(path)?),
        None => ("builtin:maze".to_string(), two_route_maze()),
    };
    if let Some(h) = args.horizon {
        spec.horizon = h;
    }
    let mdp = build_maze(&spec)?;
    for &t in &args.snapshots {
        if t == 0 || t > spec.horizon + 1 {
            return Err(Error::invalid(format!("snapshot time {t} outside 1..={}", spec.horizon + 1)));
        }
    }
    let opts = solve_options(c, beta);
    opts.validate()?;
    let runs = run_starts(&mdp, c, &opts)?;
    write_report(&c.out_dir, name, &mdp, c, &runs)?;
    let (_, best) = best_of(&runs);
    print_summary(out, c, best)?;

    let mut routes = csv_writer(&output_path(&c.out_dir, "routes.csv")?)?;
    routes.write_record(ROUTES_HEADER).map_err(csv_error)?;
    for &t in &args.snapshots {
        let probs = best.iterate.mu.state_marginal(&mdp, t - 1);
        write_snapshot_csv(&output_path(&c.out_dir, &format!("snapshot_t{t}.csv"))?, &spec, &probs)?;
        for (k, (len, cells, mass)) in route_masses(&spec, &probs)?.into_iter().enumerate() {
            routes
                .write_record([t.to_string(), k.to_string(), len.to_string(), cells.to_string(), sig12(mass)])
                .map_err(csv_error)?;
            writeln!(out, "t={t} route {k} (length {len}): mass {}", sig12(mass))?;
        }
    }
    routes.flush()?;
    let terms = information_usage(&mdp, &best.policy)?;
    write_information_csv(&output_path(&c.out_dir, "information.csv")?, &terms)?;
    writeln!(out, "information usage {}", info_display(c, terms.iter().sum()))?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct ValueIterationFile {
    instance: String,
    optimal_cost: f64,
}

fn cmd_value_iteration(c: &Common, source: &SourceArgs, out: &mut dyn Write) -> Result<i32> {
    let (name, mdp) = load_source(source)?;
    let vi = finite_horizon_value_iteration(&mdp);
    write_json(
        &output_path(&c.out_dir, "value_iteration.json")?,
        &ValueIterationFile { instance: name, optimal_cost: vi.optimal_cost },
    )?;
    let mut w = csv_writer(&output_path(&c.out_dir, "vi_policy.csv")?)?;
    w.write_record(VI_POLICY_HEADER).map_err(csv_error)?;
    for (t, acts) in vi.actions.iter().enumerate() {
        for (x, &u) in acts.iter().enumerate() {
            w.write_record([(t + 1).to_string(), x.to_string(), u.to_string(), sig12(vi.values[t][x])])
                .map_err(csv_error)?;
        }
    }
    w.flush()?;
    writeln!(out, "optimal J {}", sig12(vi.optimal_cost))?;
    Ok(0)
}

/// Suites named by a `--scope` value, with the trial override it implies.
pub fn parse_scope(scope: &str) -> Result<(Vec<Suite>, Option<usize>)> {
    match scope.trim() {
        "all" => Ok((Suite::ALL.to_vec(), None)),
        "quick" => Ok((Suite::ALL.to_vec(), Some(3))),
        list => Ok((list.split(',').map(str::parse).collect::<Result<_>>()?, None)),
    }
}

fn print_outcome(out: &mut dyn Write, o: &SuiteOutcome) -> Result<()> {
    writeln!(
        out,
        "{} {:<13} trials {:>4}  checks {:>7}  worst {}  ({:.1}s)",
        if o.passed() { "PASS" } else { "FAIL" },
        o.suite.name(),
        o.trials,
        o.checks,
        sig12(o.worst),
        o.elapsed.as_secs_f64()
    )?;
    for f in &o.failures {
        writeln!(out, "     seed {}: {}", f.seed, f.message)?;
        writeln!(out, "     replay: termdp verify --scope {} --seed {} --trials 1", o.suite.name(), f.seed)?;
    }
    Ok(())
}

fn cmd_verify(c: &Common, args: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let (suites, scope_trials) = parse_scope(&args.scope)?;
    let cfg = SuiteConfig {
        base_seed: c.seed.unwrap_or(0),
        trials: args.trials.or(scope_trials),
        corrupt_transition: args.corrupt_transition,
    };
    writeln!(out, "base seed {}", cfg.base_seed)?;
    let mut failed = 0;
    for s in suites {
        let o = run_suite(s, &cfg);
        print_outcome(out, &o)?;
        if !o.passed() {
            failed += 1;
        }
    }
    if failed > 0 {
        writeln!(out, "{failed} suite(s) failed")?;
        Ok(EXIT_VERIFY_FAILED)
    } else {
        writeln!(out, "all suites passed")?;
        Ok(0)
    }
}
