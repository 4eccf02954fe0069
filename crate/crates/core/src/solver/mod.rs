//! Forward-backward Arimoto-Blahut iteration for degree-`n` policies, its
//! stopping logic and the optimality-system residual.

pub mod blahut;
pub mod passes;
pub mod residual;

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::belief::{prior_slices, propagate_slices};
use crate::model::objective::{check_beta, expected_cost_slices, information_terms_reduced};
use crate::model::{ActionPrior, FiniteMdp, HistorySpace, MemoryPolicy, ObjectiveValue, ReducedBelief};

pub use blahut::{classical_blahut, cost_and_information, BlahutSolution};
pub use passes::{backward_pass, forward_pass, free_energy, log_sum_exp, BackwardOutput, SolverIterate};
pub use residual::{residual_breakdown, stationarity_residual, ResidualBreakdown, MASS_FLOOR};

use passes::{backward_slices, BackwardBuffers};

/// How the first policy is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initialization {
    Uniform,
    /// [`MemoryPolicy::perturbed_uniform`] with a ChaCha8 stream seeded by `seed`.
    Perturbed {
        seed: u64,
        magnitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub beta: f64,
    pub degree: usize,
    pub max_iters: usize,
    /// Relative objective change, scaled by `max(1, |f / beta|)`.
    pub tol_objective: f64,
    /// Sup-norm policy change on reachable cells.
    pub tol_residual: f64,
    pub init: Initialization,
    /// Keep every iterate's policy in the report.
    pub record_policies: bool,
}

impl SolveOptions {
    pub fn new(beta: f64, degree: usize) -> Self {
        SolveOptions {
            beta,
            degree,
            max_iters: 10_000,
            tol_objective: 1e-10,
            tol_residual: 1e-8,
            init: Initialization::Uniform,
            record_policies: false,
        }
    }

    pub fn seeded(mut self, seed: u64, magnitude: f64) -> Self {
        self.init = Initialization::Perturbed { seed, magnitude };
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.tol_objective > 0.0) || !(self.tol_residual > 0.0) {
            return Err(Error::invalid(format!(
                "tolerances must be positive, got objective {} and residual {}",
                self.tol_objective, self.tol_residual
            )));
        }
        if let Initialization::Perturbed { magnitude, .. } = self.init {
            if !(magnitude > 0.0 && magnitude < 1.0) {
                return Err(Error::invalid(format!("perturbation magnitude must lie in (0,1), got {magnitude}")));
            }
        }
        Ok(())
    }

    pub fn initial_policy(&self, mdp: &FiniteMdp) -> Result<MemoryPolicy> {
        match self.init {
            Initialization::Uniform => MemoryPolicy::uniform(mdp, self.degree),
            Initialization::Perturbed { seed, magnitude } => {
                MemoryPolicy::perturbed_uniform(mdp, self.degree, magnitude, &mut ChaCha8Rng::seed_from_u64(seed))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub beta: f64,
    pub degree: usize,
    /// Final policy; rows on cells the policy never reaches are uniform.
    pub policy: MemoryPolicy,
    /// `f(nu(q_k), q_k) = J + beta I` of every iterate, starting with the initial policy.
    pub trace: Vec<f64>,
    pub value: ObjectiveValue,
    pub residual: f64,
    pub residuals: ResidualBreakdown,
    pub free_energy: f64,
    /// Policy updates applied to reach `policy`.
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policies: Option<Vec<MemoryPolicy>>,
    /// Consistent `(mu, nu, rho, log phi, q)` at the returned policy.
    #[serde(skip)]
    pub iterate: SolverIterate,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Runs the forward-backward iteration from `opts.init`.
pub fn solve(mdp: &FiniteMdp, opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    let q0 = opts.initial_policy(mdp)?;
    solve_from(mdp, opts, q0)
}

/// Runs the forward-backward iteration from a given initial policy
/// (`opts.init` is ignored).
///
/// Each sweep pushes `q_k` forward to get `(mu_k, nu_{k+1})` and runs the
/// backward path on `nu_{k+1}` to get `q_{k+1}`. The tuple
/// `(mu_k, nu_{k+1}, rho_{k+1}, log phi_{k+1}, q_k)` satisfies every relation
/// of the optimality system except the policy update, whose violation is the
/// policy change, so the iteration stops and returns `q_k` once that change
/// and the relative objective change are both below tolerance.
pub fn solve_from(mdp: &FiniteMdp, opts: &SolveOptions, q0: MemoryPolicy) -> Result<SolveReport> {
    opts.validate()?;
    if q0.degree() != opts.degree {
        return Err(Error::invalid(format!(
            "initial policy has degree {}, options ask for {}",
            q0.degree(),
            opts.degree
        )));
    }
    q0.validate(mdp)?;
    let start = Instant::now();
    let beta = opts.beta;
    let space = HistorySpace::new(mdp, opts.degree)?;

    let mut q = q0.into_slices();
    let mut log_q: Vec<Vec<f64>> = q.iter().map(|s| s.iter().map(|v| v.ln()).collect()).collect();
    let mut mu = Vec::new();
    let mut nu = Vec::new();
    let mut back = BackwardBuffers::default();
    let mut scaled_trace = Vec::new();
    let mut policies = opts.record_policies.then(Vec::new);

    propagate_slices(mdp, &space, &q, &mut mu);
    prior_slices(mdp, &space, &mu, &q, &mut nu);
    scaled_trace.push(checked(scaled_objective(mdp, &space, &mu, &nu, &q, &log_q, beta), 0)?);

    let mut iterations = 0;
    let converged = loop {
        if let Some(p) = policies.as_mut() {
            p.push(MemoryPolicy::from_raw(opts.degree, q.clone()));
        }
        backward_slices(mdp, &space, &nu, beta, &mut back);
        let delta = masked_change(mdp, &space, &mu, &q, &back.q);
        if !delta.is_finite() {
            return Err(Error::Numerical {
                iteration: iterations + 1,
                message: "policy update produced non-finite entries".into(),
            });
        }
        let objective_settled = match scaled_trace.as_slice() {
            [.., a, b] => (a - b).abs() <= opts.tol_objective * b.abs().max(1.0),
            _ => true,
        };
        if delta < opts.tol_residual && objective_settled {
            break true;
        }
        if iterations == opts.max_iters {
            break false;
        }
        iterations += 1;
        std::mem::swap(&mut q, &mut back.q);
        std::mem::swap(&mut log_q, &mut back.log_q);
        propagate_slices(mdp, &space, &q, &mut mu);
        prior_slices(mdp, &space, &mu, &q, &mut nu);
        scaled_trace.push(checked(scaled_objective(mdp, &space, &mu, &nu, &q, &log_q, beta), iterations)?);
    };

    uniform_off_support(mdp, &space, &mu, &mut q);
    let expected_cost = expected_cost_slices(mdp, &space, &mu, &q);
    let mut nu_buf = Vec::new();
    let information: f64 = information_terms_reduced(mdp, &space, &mu, &q, &mut nu_buf).iter().sum();
    let value = ObjectiveValue { expected_cost, information, total: expected_cost + beta * information };
    let free = free_energy(&back.log_phi[0], &mu[0], beta);
    let iterate = SolverIterate {
        mu: ReducedBelief::from_raw(opts.degree, mu),
        nu: ActionPrior::from_raw(opts.degree, nu),
        rho: back.rho,
        log_phi: back.log_phi,
        q: MemoryPolicy::from_raw(opts.degree, q),
        iteration: iterations,
    };
    let residuals = residual_breakdown(mdp, &iterate, beta);
    Ok(SolveReport {
        beta,
        degree: opts.degree,
        policy: iterate.q.clone(),
        trace: scaled_trace.iter().map(|f| f * beta).collect(),
        value,
        residual: residuals.max(),
        residuals,
        free_energy: free,
        iterations,
        converged,
        policies,
        iterate,
        wall_time: start.elapsed(),
    })
}

/// Solves from `starts` perturbed initial policies with seeds
/// `base_seed, base_seed + 1, ...`, concurrently. Reports come back in seed
/// order.
pub fn solve_multistart(
    mdp: &FiniteMdp,
    opts: &SolveOptions,
    starts: usize,
    base_seed: u64,
    magnitude: f64,
) -> Result<Vec<SolveReport>> {
    if starts == 0 {
        return Err(Error::invalid("multi-start count must be at least 1"));
    }
    (0..starts as u64)
        .into_par_iter()
        .map(|i| solve(mdp, &opts.clone().seeded(base_seed.wrapping_add(i), magnitude)))
        .collect()
}

/// Sup-norm policy change of one more forward-backward sweep from `policy`,
/// over cells with `mu > MASS_FLOOR`.
pub fn sweep_change(mdp: &FiniteMdp, policy: &MemoryPolicy, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    policy.validate(mdp)?;
    let space = HistorySpace::new(mdp, policy.degree())?;
    let (mut mu, mut nu) = (Vec::new(), Vec::new());
    propagate_slices(mdp, &space, policy.slices(), &mut mu);
    prior_slices(mdp, &space, &mu, policy.slices(), &mut nu);
    let mut back = BackwardBuffers::default();
    backward_slices(mdp, &space, &nu, beta, &mut back);
    Ok(masked_change(mdp, &space, &mu, policy.slices(), &back.q))
}

/// Lowest total; ties go to the earliest report.
pub fn best_report(reports: &[SolveReport]) -> Option<&SolveReport> {
    reports.iter().reduce(|best, r| if r.value.total < best.value.total { r } else { best })
}

/// `f / beta`: `sum mu q (c / beta + log(q / nu)) + E c_T / beta`. Computing
/// in these units makes `(beta, c)` and `(1, c / beta)` runs bitwise equal.
fn scaled_objective(
    mdp: &FiniteMdp,
    space: &HistorySpace,
    mu: &[Vec<f64>],
    nu: &[Vec<f64>],
    q: &[Vec<f64>],
    log_q: &[Vec<f64>],
    beta: f64,
) -> f64 {
    let horizon = mdp.horizon();
    let mut total = 0.0;
    let mut log_prior = Vec::new();
    for t in 0..horizon {
        let (nx, na) = (mdp.n_states(t), mdp.n_actions(t));
        for h in 0..space.count(t) {
            log_prior.clear();
            log_prior.extend(nu[t][h * na..(h + 1) * na].iter().map(|p| p.ln()));
            for x in 0..nx {
                let m = mu[t][h * nx + x];
                if m == 0.0 {
                    continue;
                }
                let cell = (h * nx + x) * na;
                for u in 0..na {
                    let w = m * q[t][cell + u];
                    if w > 0.0 {
                        total += w * (mdp.cost(t, x, u) / beta + (log_q[t][cell + u] - log_prior[u]));
                    }
                }
            }
        }
    }
    let nx = mdp.n_states(horizon);
    for (i, &m) in mu[horizon].iter().enumerate() {
        total += m * (mdp.terminal_cost()[i % nx] / beta);
    }
    total
}

fn checked(f: f64, iteration: usize) -> Result<f64> {
    if f.is_finite() {
        Ok(f)
    } else {
        Err(Error::Numerical { iteration, message: format!("objective evaluated to {f}") })
    }
}

/// Sup-norm change between two policies over cells with `mu > MASS_FLOOR`.
fn masked_change(mdp: &FiniteMdp, space: &HistorySpace, mu: &[Vec<f64>], a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for t in 0..mdp.horizon() {
        let na = mdp.n_actions(t);
        for cell in 0..space.count(t) * mdp.n_states(t) {
            if mu[t][cell] > MASS_FLOOR {
                for i in cell * na..(cell + 1) * na {
                    let d = (a[t][i] - b[t][i]).abs();
                    if d.is_nan() {
                        return f64::NAN;
                    }
                    worst = worst.max(d);
                }
            }
        }
    }
    worst
}

fn uniform_off_support(mdp: &FiniteMdp, space: &HistorySpace, mu: &[Vec<f64>], q: &mut [Vec<f64>]) {
    for t in 0..mdp.horizon() {
        let na = mdp.n_actions(t);
        for cell in 0..space.count(t) * mdp.n_states(t) {
            if mu[t][cell] == 0.0 {
                q[t][cell * na..(cell + 1) * na].fill(1.0 / na as f64);
            }
        }
    }
}
