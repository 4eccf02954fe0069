use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::belief::{prior_slices, propagate_slices};
use crate::model::objective::check_beta;
use crate::model::{ActionPrior, FiniteMdp, HistorySpace, MemoryPolicy, ReducedBelief};

/// One sweep's variables `(mu, nu, rho, log phi, q)`.
///
/// `rho[t]` is row-major over `(history, x_t, u_t)` and `log_phi[t]` over
/// `(history, x_t)` for `t = 0..=horizon` (the last entry is the terminal
/// condition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverIterate {
    pub mu: ReducedBelief,
    pub nu: ActionPrior,
    pub rho: Vec<Vec<f64>>,
    pub log_phi: Vec<Vec<f64>>,
    pub q: MemoryPolicy,
    pub iteration: usize,
}

/// Output of the backward path.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardOutput {
    pub rho: Vec<Vec<f64>>,
    pub log_phi: Vec<Vec<f64>>,
    pub policy: MemoryPolicy,
}

/// Forward path: the reduced state under `q_prev` and the prior it induces.
pub fn forward_pass(mdp: &FiniteMdp, q_prev: &MemoryPolicy) -> Result<(ReducedBelief, ActionPrior)> {
    q_prev.validate(mdp)?;
    let space = HistorySpace::new(mdp, q_prev.degree())?;
    let mut mu = Vec::new();
    let mut nu = Vec::new();
    propagate_slices(mdp, &space, q_prev.slices(), &mut mu);
    prior_slices(mdp, &space, &mu, q_prev.slices(), &mut nu);
    Ok((ReducedBelief::from_raw(q_prev.degree(), mu), ActionPrior::from_raw(q_prev.degree(), nu)))
}

/// Backward path: modified costs, log partition functions and the updated
/// policy for a fixed prior `nu`, with costs measured in units of `beta`.
pub fn backward_pass(mdp: &FiniteMdp, nu: &ActionPrior, beta: f64) -> Result<BackwardOutput> {
    check_beta(beta)?;
    nu.validate(mdp)?;
    let space = HistorySpace::new(mdp, nu.degree())?;
    let mut buffers = BackwardBuffers::default();
    backward_slices(mdp, &space, nu.slices(), beta, &mut buffers);
    Ok(BackwardOutput {
        rho: buffers.rho,
        log_phi: buffers.log_phi,
        policy: MemoryPolicy::from_raw(nu.degree(), buffers.q),
    })
}

#[derive(Debug, Default, Clone)]
pub(crate) struct BackwardBuffers {
    pub rho: Vec<Vec<f64>>,
    pub log_phi: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    /// `log q`, kept so the objective needs no extra logarithms.
    pub log_q: Vec<Vec<f64>>,
}

/// `rho_t = c_t / beta - sum_{x'} p log phi_{t+1}`,
/// `log phi_t = logsumexp_u (log nu_t - rho_t)`,
/// `q_t = exp(log nu_t - rho_t - log phi_t)`,
/// from the terminal condition `log phi_T = -c_T / beta`.
pub(crate) fn backward_slices(
    mdp: &FiniteMdp,
    space: &HistorySpace,
    nu: &[Vec<f64>],
    beta: f64,
    out: &mut BackwardBuffers,
) {
    let horizon = mdp.horizon();
    out.rho.resize_with(horizon, Vec::new);
    out.q.resize_with(horizon, Vec::new);
    out.log_q.resize_with(horizon, Vec::new);
    out.log_phi.resize_with(horizon + 1, Vec::new);

    let nx_term = mdp.n_states(horizon);
    let term = &mut out.log_phi[horizon];
    term.clear();
    term.reserve(space.count(horizon) * nx_term);
    for _ in 0..space.count(horizon) {
        term.extend(mdp.terminal_cost().iter().map(|&c| -(c / beta)));
    }

    let mut exponents = Vec::new();
    let mut log_prior = Vec::new();
    for t in (0..horizon).rev() {
        let (nx, na, nxn) = (mdp.n_states(t), mdp.n_actions(t), mdp.n_states(t + 1));
        let (head, tail) = out.log_phi.split_at_mut(t + 1);
        let next_phi = &tail[0];
        let log_phi = &mut head[t];
        let rho = &mut out.rho[t];
        let q = &mut out.q[t];
        let log_q = &mut out.log_q[t];
        let nh = space.count(t);
        rho.clear();
        rho.resize(nh * nx * na, 0.0);
        q.clear();
        q.resize(nh * nx * na, 0.0);
        log_q.clear();
        log_q.resize(nh * nx * na, 0.0);
        log_phi.clear();
        log_phi.resize(nh * nx, 0.0);
        exponents.resize(na, 0.0);
        for h in 0..nh {
            log_prior.clear();
            log_prior.extend(nu[t][h * na..(h + 1) * na].iter().map(|p| p.ln()));
            for x in 0..nx {
                let cell = h * nx + x;
                for u in 0..na {
                    let base = space.successor(t, h, u) * nxn;
                    let mut cont = 0.0;
                    for &(xn, p) in mdp.successors(t, x, u) {
                        cont += p * next_phi[base + xn];
                    }
                    let r = mdp.cost(t, x, u) / beta - cont;
                    rho[cell * na + u] = r;
                    exponents[u] = log_prior[u] - r;
                }
                // shifted exponentials serve both the normalizer and q
                let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let range = cell * na..(cell + 1) * na;
                let q_row = &mut q[range.clone()];
                let mut sum = 0.0;
                for (qu, &a) in q_row.iter_mut().zip(&exponents) {
                    *qu = (a - max).exp();
                    sum += *qu;
                }
                let lse = max + sum.ln();
                log_phi[cell] = lse;
                for v in q_row.iter_mut() {
                    *v = flush_subnormal(*v / sum);
                }
                for (lq, &a) in log_q[range].iter_mut().zip(&exponents) {
                    *lq = a - lse;
                }
            }
        }
    }
}

/// Zero for values below the smallest normal double. Subnormal
/// probabilities carry no usable mass but make every later multiply slow.
#[inline]
pub(crate) fn flush_subnormal(v: f64) -> f64 {
    if v < f64::MIN_POSITIVE {
        0.0
    } else {
        v
    }
}

/// Shifted log-sum-exp; `-inf` entries are ignored.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    let s: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + s.ln()
}

/// `-beta * sum_x mu_0(x) log phi_0(x)`: the optimal cost-to-go under the
/// last backward path, in cost units.
pub fn free_energy(log_phi_initial: &[f64], mu_initial: &[f64], beta: f64) -> f64 {
    let s: f64 = log_phi_initial.iter().zip(mu_initial).filter(|(_, &m)| m > 0.0).map(|(&lp, &m)| m * lp).sum();
    -beta * s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hamming_one_step(prior: [f64; 2]) -> FiniteMdp {
        FiniteMdp::stationary(1, 2, 2, vec![0.5; 8], vec![0.0, 1.0, 1.0, 0.0], vec![0.0; 2], prior.to_vec()).unwrap()
    }

    #[test]
    fn log_sum_exp_is_shift_stable() {
        assert!((log_sum_exp(&[-10000.0, -10000.0]) - (-10000.0 + 2f64.ln())).abs() < 1e-9);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]), 0.0);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn zero_cost_returns_prior() {
        let mdp = FiniteMdp::stationary(1, 2, 3, vec![0.5; 12], vec![0.0; 6], vec![0.0; 2], vec![0.5, 0.5]).unwrap();
        let nu = ActionPrior::new(&mdp, 0, vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let out = backward_pass(&mdp, &nu, 1.0).unwrap();
        for x in 0..2 {
            let row = out.policy.row(&mdp, 0, 0, x);
            for (a, b) in row.iter().zip([0.2, 0.3, 0.5]) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn hamming_fixed_point_from_uniform_prior() {
        let mdp = hamming_one_step([0.5, 0.5]);
        let nu = ActionPrior::uniform(&mdp, 0).unwrap();
        let out = backward_pass(&mdp, &nu, 1.0).unwrap();
        let expect = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((out.policy.prob(&mdp, 0, 0, 0, 0) - expect).abs() < 1e-15);
        assert!((out.policy.prob(&mdp, 0, 0, 1, 1) - expect).abs() < 1e-15);
    }

    #[test]
    fn forward_pass_on_point_mass_returns_policy_row() {
        let mdp = hamming_one_step([1.0, 0.0]);
        let q = MemoryPolicy::new(&mdp, 0, vec![vec![0.3, 0.7, 0.5, 0.5]]).unwrap();
        let (_, nu) = forward_pass(&mdp, &q).unwrap();
        assert_eq!(nu.row(&mdp, 0, 0), &[0.3, 0.7]);
    }

    #[test]
    fn huge_terminal_cost_stays_finite() {
        // two states, staying costs 10000 at the end unless we move to state 1
        let tr = vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        let mdp = FiniteMdp::stationary(5, 2, 2, tr, vec![1.0; 4], vec![10000.0, 0.0], vec![1.0, 0.0]).unwrap();
        let nu = ActionPrior::uniform(&mdp, 0).unwrap();
        let out = backward_pass(&mdp, &nu, 1.0).unwrap();
        assert!(out.log_phi.iter().flatten().all(|v| v.is_finite()));
        for slice in out.policy.slices() {
            for row in slice.chunks_exact(2) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        // naive exp(-10000) underflows
        assert_eq!((-10000.0f64).exp(), 0.0);
    }
}
