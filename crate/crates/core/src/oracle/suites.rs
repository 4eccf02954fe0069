//! Seeded property suites that exercise the model, solver and oracles on
//! random instances. Trial `i` of a suite uses the seed `base + i`, so any
//! reported failure replays with [`trial_rng`].

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::envs::{instance_to_json, parse_instance, random_instance, RandomSpec};
use crate::error::{Error, Result};
use crate::model::{
    factored_objective, propagate_reduced, transfer_entropy, transfer_entropy_terms, Degree, FiniteMdp, MemoryPolicy,
    DEFAULT_CELL_BUDGET,
};
use crate::oracle::brute::{brute_force_policy_search, full_history_optimum};
use crate::solver::{best_report, solve, sweep_change, SolveOptions, SolveReport, MASS_FLOOR};

/// Per-step slack on the objective trace.
pub const DESCENT_SLACK: f64 = 1e-12;
/// Bound on the stationarity residual and on the extra-sweep change.
pub const RESIDUAL_BOUND: f64 = 1e-8;
/// Bound on `|I_{m,n} - I_{0,n}|` and on term-wise monotonicity violations.
pub const IDENTITY_TOL: f64 = 1e-12;
/// Grid tolerance of exhaustive searches.
pub const GRID_TOL: f64 = 1e-3;
/// Resolution of the exhaustive searches in the chain and agreement suites.
pub const GRID_RESOLUTION: f64 = 1e-3;
/// Lower slack of the solver against the exhaustive optimum.
pub const AGREEMENT_SLACK: f64 = 1e-9;
/// Step of the central differences.
pub const FD_STEP: f64 = 1e-6;
/// Most negative admissible directional derivative.
pub const FD_FLOOR: f64 = -1e-6;

const CONSERVATION_TOL: f64 = 1e-10;
const PERTURBATION: f64 = 0.5;
const AGREEMENT_STARTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Instance files round-trip and validate; propagated beliefs conserve mass.
    Validation,
    /// `I_{m,n} = I_{0,n}` under degree-`n` policies.
    Reduction,
    /// `I(X_t; U_t | U_{t-k}^{t-1})` does not grow with `k >= n`.
    Monotonicity,
    /// The degree-`n` optimum bounds the full-history directed-information optimum.
    Chain,
    /// Solver multi-start agrees with exhaustive search on tiny instances.
    Agreement,
    /// Objective traces are nonincreasing.
    Descent,
    /// Converged solves certify stationarity.
    Residual,
    /// Central-difference directional derivatives at converged solves are nonnegative.
    Stationarity,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Validation,
        Suite::Reduction,
        Suite::Monotonicity,
        Suite::Chain,
        Suite::Agreement,
        Suite::Descent,
        Suite::Residual,
        Suite::Stationarity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Validation => "validation",
            Suite::Reduction => "reduction",
            Suite::Monotonicity => "monotonicity",
            Suite::Chain => "chain",
            Suite::Agreement => "agreement",
            Suite::Descent => "descent",
            Suite::Residual => "residual",
            Suite::Stationarity => "stationarity",
        }
    }

    /// Trial count of a full run.
    pub fn default_trials(self) -> usize {
        match self {
            Suite::Validation => 50,
            Suite::Reduction | Suite::Monotonicity => 100,
            Suite::Chain | Suite::Agreement => 20,
            Suite::Descent | Suite::Residual => 200,
            Suite::Stationarity => 30,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown suite '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteConfig {
    pub base_seed: u64,
    /// Overrides every suite's trial count.
    pub trials: Option<usize>,
    /// Damages one transition row of every instance in the validation suite.
    pub corrupt_transition: bool,
}

impl SuiteConfig {
    fn trials(&self, suite: Suite) -> usize {
        self.trials.unwrap_or_else(|| suite.default_trials())
    }

    fn seeds(&self, suite: Suite) -> Vec<u64> {
        (0..self.trials(suite) as u64).map(|i| self.base_seed.wrapping_add(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub trials: usize,
    /// Individual comparisons made.
    pub checks: usize,
    pub failures: Vec<Failure>,
    /// Largest violation-side quantity seen, in the suite's own units.
    pub worst: f64,
    pub note: String,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Random stream of one trial.
pub fn trial_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Result of one trial: checks made, worst quantity, failures.
type Trial = (usize, f64, Vec<String>);

fn collect(suite: Suite, seeds: &[u64], start: Instant, note: String, results: Vec<Result<Trial>>) -> SuiteOutcome {
    let mut out = SuiteOutcome {
        suite,
        trials: seeds.len(),
        checks: 0,
        failures: Vec::new(),
        worst: f64::NEG_INFINITY,
        note,
        elapsed: Duration::ZERO,
    };
    for (&seed, r) in seeds.iter().zip(results) {
        match r {
            Ok((checks, worst, failures)) => {
                out.checks += checks;
                out.worst = out.worst.max(worst);
                out.failures.extend(failures.into_iter().map(|message| Failure { seed, message }));
            }
            Err(e) => out.failures.push(Failure { seed, message: e.to_string() }),
        }
    }
    out.elapsed = start.elapsed();
    out
}

/// Runs one suite.
pub fn run_suite(suite: Suite, cfg: &SuiteConfig) -> SuiteOutcome {
    let start = Instant::now();
    let seeds = cfg.seeds(suite);
    let (note, results): (String, Vec<Result<Trial>>) = match suite {
        Suite::Validation => (
            format!("corrupt_transition={}", cfg.corrupt_transition),
            seeds.par_iter().map(|&s| validation_trial(s, cfg.corrupt_transition)).collect(),
        ),
        Suite::Reduction => {
            ("max |I_{m,n} - I_{0,n}|, m in {1,2}".into(), seeds.par_iter().map(|&s| reduction_trial(s)).collect())
        }
        Suite::Monotonicity => {
            ("max term increase I_{0,k+1} - I_{0,k}".into(), seeds.par_iter().map(|&s| monotonicity_trial(s)).collect())
        }
        Suite::Chain => (
            "max of directed optimum minus degree-n optimum".into(),
            seeds.par_iter().map(|&s| chain_trial(s)).collect(),
        ),
        Suite::Agreement => {
            ("max |solver best - exhaustive best|".into(), seeds.par_iter().map(|&s| agreement_trial(s)).collect())
        }
        Suite::Descent => {
            ("max objective increase per step".into(), seeds.par_iter().map(|&s| descent_trial(s)).collect())
        }
        Suite::Residual => (
            "max of residual and extra-sweep change over converged solves".into(),
            seeds.par_iter().map(|&s| residual_trial(s)).collect(),
        ),
        Suite::Stationarity => {
            ("negated least directional derivative".into(), seeds.par_iter().map(|&s| stationarity_trial(s)).collect())
        }
    };
    collect(suite, &seeds, start, note, results)
}

/// Runs several suites in order.
pub fn run_suites(suites: &[Suite], cfg: &SuiteConfig) -> Vec<SuiteOutcome> {
    suites.iter().map(|&s| run_suite(s, cfg)).collect()
}

fn random_policy(mdp: &FiniteMdp, degree: usize, rng: &mut ChaCha8Rng) -> Result<MemoryPolicy> {
    MemoryPolicy::random(mdp, degree, rng)
}

/// Scales one transition row so it sums to 0.99.
fn corrupt(doc: &mut Value, rng: &mut ChaCha8Rng) {
    let mut node = &mut doc["transition"];
    // descend to the first time slice when slices are given per time
    if node[0][0][0].is_array() {
        node = &mut node[0];
    }
    let x = rng.random_range(0..node.as_array().map_or(1, Vec::len));
    let u = rng.random_range(0..node[x].as_array().map_or(1, Vec::len));
    if let Some(row) = node[x][u].as_array_mut() {
        for v in row {
            *v = Value::from(v.as_f64().unwrap_or(0.0) * 0.99);
        }
    }
}

fn validation_trial(seed: u64, corrupt_transition: bool) -> Result<Trial> {
    let mut rng = trial_rng(seed);
    let mdp = random_instance(RandomSpec::new(6, 4, 4), &mut rng)?;
    let mut doc: Value = serde_json::from_str(&instance_to_json(&mdp)?)?;
    if corrupt_transition {
        corrupt(&mut doc, &mut rng);
    }
    let mut failures = Vec::new();
    match parse_instance(&doc.to_string()) {
        Ok(back) if back == mdp => {}
        Ok(_) => failures.push("instance changed in a save/load round trip".into()),
        Err(e) => failures.push(e.to_string()),
    }
    let degree = rng.random_range(0..=2);
    let policy = random_policy(&mdp, degree, &mut rng)?;
    let mu = propagate_reduced(&mdp, &policy)?;
    let mut worst: f64 = 0.0;
    for t in 0..=mdp.horizon() {
        let err = (mu.mass(t) - 1.0).abs();
        worst = worst.max(err);
        if err > CONSERVATION_TOL {
            failures.push(format!("belief mass at t={t} is off by {err:.3e}"));
        }
    }
    Ok((2 + mdp.horizon(), worst, failures))
}

fn reduction_trial(seed: u64) -> Result<Trial> {
    let mut rng = trial_rng(seed);
    let mdp = random_instance(RandomSpec::new(5, 3, 3), &mut rng)?;
    let n = (seed % 3) as usize;
    let policy = random_policy(&mdp, n, &mut rng)?;
    let base = transfer_entropy(&mdp, &policy, Degree::Finite(0), Degree::Finite(n), DEFAULT_CELL_BUDGET)?;
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for m in 1..=2 {
        let te = transfer_entropy(&mdp, &policy, Degree::Finite(m), Degree::Finite(n), DEFAULT_CELL_BUDGET)?;
        let gap = (te - base).abs();
        worst = worst.max(gap);
        if !(gap < IDENTITY_TOL) {
            failures.push(format!("n={n} m={m}: I_(m,n)={te:.15e} but I_(0,n)={base:.15e}"));
        }
    }
    Ok((2, worst, failures))
}

fn monotonicity_trial(seed: u64) -> Result<Trial> {
    let mut rng = trial_rng(seed);
    let mdp = random_instance(RandomSpec::new(5, 3, 3), &mut rng)?;
    let n = (seed % 3) as usize;
    let policy = random_policy(&mdp, n, &mut rng)?;
    let top = mdp.horizon().max(n + 1);
    let terms: Vec<Vec<f64>> = (n..=top)
        .map(|k| transfer_entropy_terms(&mdp, &policy, Degree::Finite(0), Degree::Finite(k), DEFAULT_CELL_BUDGET))
        .collect::<Result<_>>()?;
    let mut failures = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    let mut checks = 0;
    for (i, pair) in terms.windows(2).enumerate() {
        for t in 0..mdp.horizon() {
            let rise = pair[1][t] - pair[0][t];
            worst = worst.max(rise);
            checks += 1;
            if rise > IDENTITY_TOL {
                let k = n + i;
                failures
                    .push(format!("n={n} t={t}: term grows from {:.15e} at k={k} to {:.15e}", pair[0][t], pair[1][t]));
            }
        }
    }
    Ok((checks, worst, failures))
}

fn chain_trial(seed: u64) -> Result<Trial> {
    let mut rng = trial_rng(seed);
    let mdp = random_instance(RandomSpec::exact(2, 2, 2), &mut rng)?;
    let beta = rng.random_range(0.3..3.0);
    let n = (seed % 2) as usize;
    let restricted = brute_force_policy_search(&mdp, beta, n, GRID_RESOLUTION)?;
    let directed = full_history_optimum(&mdp, beta, Degree::Full, Degree::Full, GRID_RESOLUTION)?;
    let excess = directed.value.total - restricted.value.total;
    let mut failures = Vec::new();
    if excess > GRID_TOL {
        failures.push(format!(
            "beta={beta:.6} n={n}: degree-n optimum {:.9} below directed optimum {:.9}",
            restricted.value.total, directed.value.total
        ));
    }
    Ok((1, excess, failures))
}

fn free_coordinates(mdp: &FiniteMdp) -> usize {
    (0..mdp.horizon()).map(|t| mdp.n_states(t) * (mdp.n_actions(t) - 1)).sum()
}

fn agreement_trial(seed: u64) -> Result<Trial> {
    let mut rng = trial_rng(seed);
    let mdp = loop {
        let candidate = random_instance(RandomSpec::new(3, 3, 3), &mut rng)?;
        if (1..=6).contains(&free_coordinates(&candidate)) {
            break candidate;
        }
    };
    let beta = rng.random_range(0.3..3.0);
    let opts = SolveOptions::new(beta, 0);
    let mut reports: Vec<SolveReport> = vec![solve(&mdp, &opts)?];
    for i in 0..AGREEMENT_STARTS as u64 {
        reports.push(solve(&mdp, &opts.clone().seeded(seed.wrapping_mul(1000).wrapping_add(i), PERTURBATION))?);
    }
    let best = best_report(&reports).expect("at least one report").value.total;
    let brute = brute_force_policy_search(&mdp, beta, 0, GRID_RESOLUTION)?.value.total;
    let mut failures = Vec::new();
    if best > brute + GRID_TOL {
        failures.push(format!("beta={beta:.6}: solver best {best:.12} exceeds exhaustive {brute:.12}"));
    }
    if best < brute - AGREEMENT_SLACK {
        failures.push(format!("beta={beta:.6}: solver best {best:.12} beats exhaustive {brute:.12}"));
    }
    Ok((2, (best - brute).abs(), failures))
}

/// The solve shared by the descent and residual suites: instance with
/// `T <= 10`, at most 5 states and actions, degree at most 2.
pub fn random_solve(seed: u64) -> Result<(FiniteMdp, SolveReport)> {
    let mut rng = trial_rng(seed);
    let mdp = random_instance(RandomSpec::new(10, 5, 5), &mut rng)?;
    let degree = rng.random_range(0..=2);
    let beta = rng.random_range(0.2..5.0);
    let opts = SolveOptions::new(beta, degree).seeded(seed, PERTURBATION);
    let report = solve(&mdp, &opts)?;
    Ok((mdp, report))
}

/// Largest increase between consecutive trace entries.
pub fn max_increase(trace: &[f64]) -> f64 {
    trace.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
}

fn descent_trial(seed: u64) -> Result<Trial> {
    let (_, report) = random_solve(seed)?;
    let rise = max_increase(&report.trace);
    let mut failures = Vec::new();
    if rise > DESCENT_SLACK {
        failures.push(format!("objective rose by {rise:.3e} within {} steps", report.trace.len() - 1));
    }
    Ok((report.trace.len().saturating_sub(1), rise, failures))
}

fn residual_trial(seed: u64) -> Result<Trial> {
    let (mdp, report) = random_solve(seed)?;
    if !report.converged {
        return Ok((0, 0.0, Vec::new()));
    }
    let change = sweep_change(&mdp, &report.policy, report.beta)?;
    let mut failures = Vec::new();
    if !(report.residual < RESIDUAL_BOUND) {
        failures.push(format!("residual {:.3e} after {} iterations", report.residual, report.iterations));
    }
    if !(change < RESIDUAL_BOUND) {
        failures.push(format!("extra sweep changes the policy by {change:.3e}"));
    }
    Ok((2, report.residual.max(change), failures))
}

/// Least directional derivative of `f(nu, .)` at the solver's policy over
/// the feasible directions `e_a - e_b` inside every reachable row, with `nu`
/// fixed at the returned prior. Central differences where both sides are
/// feasible, forward differences on the boundary.
pub fn least_directional_derivative(mdp: &FiniteMdp, report: &SolveReport) -> Result<f64> {
    let nu = &report.iterate.nu;
    let mu = &report.iterate.mu;
    let beta = report.beta;
    let base = report.policy.clone().into_slices();
    let f = |slices: Vec<Vec<f64>>| -> Result<f64> {
        factored_objective(mdp, nu, &MemoryPolicy::new(mdp, report.degree, slices)?, beta)
    };
    let f0 = f(base.clone())?;
    let mut least = f64::INFINITY;
    for t in 0..mdp.horizon() {
        let nu_t = mdp.n_actions(t);
        for (cell, &mass) in mu.slice(t).iter().enumerate() {
            if mass <= MASS_FLOOR {
                continue;
            }
            let row = cell * nu_t;
            for a in 0..nu_t {
                for b in 0..nu_t {
                    let (qa, qb) = (base[t][row + a], base[t][row + b]);
                    if a == b || qb < FD_STEP {
                        continue;
                    }
                    let shifted = |h: f64| {
                        let mut s = base.clone();
                        s[t][row + a] += h;
                        s[t][row + b] -= h;
                        s
                    };
                    let d = if qa >= FD_STEP && qb >= FD_STEP {
                        (f(shifted(FD_STEP))? - f(shifted(-FD_STEP))?) / (2.0 * FD_STEP)
                    } else {
                        (f(shifted(FD_STEP))? - f0) / FD_STEP
                    };
                    least = least.min(d);
                }
            }
        }
    }
    Ok(least)
}

fn stationarity_trial(seed: u64) -> Result<Trial> {
    let mut rng = trial_rng(seed);
    let mdp = random_instance(RandomSpec::new(4, 3, 3), &mut rng)?;
    let degree = rng.random_range(0..=1);
    let beta = rng.random_range(0.3..3.0);
    let report = solve(&mdp, &SolveOptions::new(beta, degree).seeded(seed, PERTURBATION))?;
    if !report.converged {
        return Ok((0, f64::NEG_INFINITY, Vec::new()));
    }
    let least = least_directional_derivative(&mdp, &report)?;
    let mut failures = Vec::new();
    if least < FD_FLOOR {
        failures.push(format!("directional derivative {least:.3e} at a converged policy"));
    }
    Ok((1, -least, failures))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(trials: usize) -> SuiteConfig {
        SuiteConfig { trials: Some(trials), ..SuiteConfig::default() }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn clean_validation_passes_and_corruption_names_indices() {
        assert!(run_suite(Suite::Validation, &quick(5)).passed());
        let cfg = SuiteConfig { corrupt_transition: true, ..quick(5) };
        let out = run_suite(Suite::Validation, &cfg);
        assert_eq!(out.failures.len(), 5);
        assert!(out.failures.iter().all(|f| f.message.contains("transition[t=")), "{:?}", out.failures);
    }

    #[test]
    fn quick_property_suites_pass() {
        for s in [Suite::Reduction, Suite::Monotonicity, Suite::Descent, Suite::Residual, Suite::Stationarity] {
            let out = run_suite(s, &quick(6));
            assert!(out.passed(), "{s}: {:?}", out.failures);
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let a = random_solve(11).unwrap().1;
        let b = random_solve(11).unwrap().1;
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.policy, b.policy);
    }
}
