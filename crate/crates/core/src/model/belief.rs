use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionPrior, FiniteMdp, HistorySpace, MemoryPolicy};

/// Joint distributions `mu_t(x_t, u_{t-n}^{t-1})` for `t = 0..=horizon`.
///
/// `slices[t]` is row-major over `(history, x_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedBelief {
    degree: usize,
    slices: Vec<Vec<f64>>,
}

impl ReducedBelief {
    pub(crate) fn from_raw(degree: usize, slices: Vec<Vec<f64>>) -> Self {
        ReducedBelief { degree, slices }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }

    pub fn slice(&self, t: usize) -> &[f64] {
        &self.slices[t]
    }

    /// Total mass of `mu_t`.
    pub fn mass(&self, t: usize) -> f64 {
        self.slices[t].iter().sum()
    }

    /// State marginal `mu_t(x_t)`.
    pub fn state_marginal(&self, mdp: &FiniteMdp, t: usize) -> Vec<f64> {
        let nx = mdp.n_states(t);
        let mut out = vec![0.0; nx];
        for row in self.slices[t].chunks_exact(nx) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// History marginal `mu_t(u_{t-n}^{t-1})`.
    pub fn history_marginal(&self, mdp: &FiniteMdp, t: usize) -> Vec<f64> {
        let nx = mdp.n_states(t);
        self.slices[t].chunks_exact(nx).map(|r| r.iter().sum()).collect()
    }
}

/// Propagates the reduced state forward under `policy`.
pub fn propagate_reduced(mdp: &FiniteMdp, policy: &MemoryPolicy) -> Result<ReducedBelief> {
    policy.validate(mdp)?;
    let space = HistorySpace::new(mdp, policy.degree())?;
    let mut slices = Vec::new();
    propagate_slices(mdp, &space, policy.slices(), &mut slices);
    Ok(ReducedBelief::from_raw(policy.degree(), slices))
}

/// `mu_{t+1}(x', h') = sum_{x, h : succ(h,u) = h'} p(x'|x,u) q(u|x,h) mu_t(x,h)`.
pub(crate) fn propagate_slices(mdp: &FiniteMdp, space: &HistorySpace, q: &[Vec<f64>], out: &mut Vec<Vec<f64>>) {
    let horizon = mdp.horizon();
    out.resize_with(horizon + 1, Vec::new);
    let first = &mut out[0];
    first.clear();
    first.extend_from_slice(mdp.initial());
    for t in 0..horizon {
        let (nx, nu, nxn) = (mdp.n_states(t), mdp.n_actions(t), mdp.n_states(t + 1));
        let (done, rest) = out.split_at_mut(t + 1);
        let cur = &done[t];
        let next = &mut rest[0];
        next.clear();
        next.resize(space.count(t + 1) * nxn, 0.0);
        for h in 0..space.count(t) {
            for x in 0..nx {
                let m = cur[h * nx + x];
                if m == 0.0 {
                    continue;
                }
                let qrow = &q[t][(h * nx + x) * nu..(h * nx + x + 1) * nu];
                for (u, &qu) in qrow.iter().enumerate() {
                    let w = m * qu;
                    if w == 0.0 {
                        continue;
                    }
                    let base = space.successor(t, h, u) * nxn;
                    for &(xn, p) in mdp.successors(t, x, u) {
                        next[base + xn] += w * p;
                    }
                }
            }
        }
        // subnormal masses are dropped, as in the backward path
        for v in next.iter_mut() {
            if *v < f64::MIN_POSITIVE {
                *v = 0.0;
            }
        }
    }
}

/// The prior induced by `policy` under `belief`:
/// `nu_t(u | h) = sum_x q_t(u | x, h) mu_t(x | h)`, uniform where `mu_t(h) = 0`.
pub fn induced_prior(mdp: &FiniteMdp, belief: &ReducedBelief, policy: &MemoryPolicy) -> Result<ActionPrior> {
    if belief.degree() != policy.degree() {
        return Err(Error::instance(format!(
            "belief degree {} differs from policy degree {}",
            belief.degree(),
            policy.degree()
        )));
    }
    policy.validate(mdp)?;
    let space = HistorySpace::new(mdp, policy.degree())?;
    let mut slices = Vec::new();
    prior_slices(mdp, &space, belief.slices(), policy.slices(), &mut slices);
    Ok(ActionPrior::from_raw(policy.degree(), slices))
}

pub(crate) fn prior_slices(
    mdp: &FiniteMdp,
    space: &HistorySpace,
    mu: &[Vec<f64>],
    q: &[Vec<f64>],
    out: &mut Vec<Vec<f64>>,
) {
    let horizon = mdp.horizon();
    out.resize_with(horizon, Vec::new);
    for t in 0..horizon {
        let (nx, nu) = (mdp.n_states(t), mdp.n_actions(t));
        let slice = &mut out[t];
        slice.clear();
        slice.resize(space.count(t) * nu, 0.0);
        for h in 0..space.count(t) {
            let row = &mut slice[h * nu..(h + 1) * nu];
            let mut mass = 0.0;
            for x in 0..nx {
                let m = mu[t][h * nx + x];
                if m == 0.0 {
                    continue;
                }
                mass += m;
                let qrow = &q[t][(h * nx + x) * nu..(h * nx + x + 1) * nu];
                for (r, &qu) in row.iter_mut().zip(qrow) {
                    *r += m * qu;
                }
            }
            if mass > 0.0 {
                row.iter_mut().for_each(|r| *r /= mass);
            } else {
                row.fill(1.0 / nu as f64);
            }
        }
    }
}
