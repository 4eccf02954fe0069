use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::belief::{prior_slices, propagate_slices};
use crate::model::history::DEFAULT_CELL_BUDGET;
use crate::model::information::{transfer_entropy_terms, Degree};
use crate::model::{ActionPrior, FiniteMdp, HistorySpace, MemoryPolicy};

/// Objective decomposition `(J, I, J + beta * I)`; `I` in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub expected_cost: f64,
    pub information: f64,
    pub total: f64,
}

/// Stage-additive expected cost of `policy`.
pub fn expected_cost(mdp: &FiniteMdp, policy: &MemoryPolicy) -> Result<f64> {
    policy.validate(mdp)?;
    let space = HistorySpace::new(mdp, policy.degree())?;
    let mut mu = Vec::new();
    propagate_slices(mdp, &space, policy.slices(), &mut mu);
    Ok(expected_cost_slices(mdp, &space, &mu, policy.slices()))
}

pub(crate) fn expected_cost_slices(mdp: &FiniteMdp, space: &HistorySpace, mu: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    let horizon = mdp.horizon();
    let mut total = 0.0;
    for t in 0..horizon {
        let (nx, nu) = (mdp.n_states(t), mdp.n_actions(t));
        let cost = mdp.stage_cost(t);
        for h in 0..space.count(t) {
            for x in 0..nx {
                let m = mu[t][h * nx + x];
                if m == 0.0 {
                    continue;
                }
                let qrow = &q[t][(h * nx + x) * nu..(h * nx + x + 1) * nu];
                let c: f64 = qrow.iter().zip(&cost[x * nu..(x + 1) * nu]).map(|(a, b)| a * b).sum();
                total += m * c;
            }
        }
    }
    let nx = mdp.n_states(horizon);
    for (i, &m) in mu[horizon].iter().enumerate() {
        total += m * mdp.terminal_cost()[i % nx];
    }
    total
}

/// Per-time `I(X_t; U_t | U_{t-n}^{t-1})` from the reduced state, with `n`
/// the policy degree.
pub(crate) fn information_terms_reduced(
    mdp: &FiniteMdp,
    space: &HistorySpace,
    mu: &[Vec<f64>],
    q: &[Vec<f64>],
    nu_buf: &mut Vec<Vec<f64>>,
) -> Vec<f64> {
    prior_slices(mdp, space, mu, q, nu_buf);
    (0..mdp.horizon())
        .map(|t| {
            let (nx, nu) = (mdp.n_states(t), mdp.n_actions(t));
            let mut acc = 0.0;
            for h in 0..space.count(t) {
                let prior = &nu_buf[t][h * nu..(h + 1) * nu];
                for x in 0..nx {
                    let m = mu[t][h * nx + x];
                    if m == 0.0 {
                        continue;
                    }
                    let qrow = &q[t][(h * nx + x) * nu..(h * nx + x + 1) * nu];
                    for (&qu, &pu) in qrow.iter().zip(prior) {
                        let w = m * qu;
                        if w > 0.0 {
                            acc += w * (qu / pu).ln();
                        }
                    }
                }
            }
            acc.max(0.0)
        })
        .collect()
}

/// Per-time information usage `I(X_t; U_t | U_{t-n}^{t-1})` of a degree-`n`
/// policy.
pub fn information_usage(mdp: &FiniteMdp, policy: &MemoryPolicy) -> Result<Vec<f64>> {
    policy.validate(mdp)?;
    let space = HistorySpace::new(mdp, policy.degree())?;
    let mut mu = Vec::new();
    propagate_slices(mdp, &space, policy.slices(), &mut mu);
    let mut nu = Vec::new();
    Ok(information_terms_reduced(mdp, &space, &mu, policy.slices(), &mut nu))
}

/// `(J, I_{m,n}, J + beta * I_{m,n})` for a degree-`k` policy.
///
/// When `m = 0` and `n_eval` equals the policy degree the information term is
/// read off the reduced state; otherwise an exact window joint is built.
pub fn objective(
    mdp: &FiniteMdp,
    policy: &MemoryPolicy,
    beta: f64,
    m: Degree,
    n_eval: Degree,
) -> Result<ObjectiveValue> {
    check_beta(beta)?;
    policy.validate(mdp)?;
    let space = HistorySpace::new(mdp, policy.degree())?;
    let mut mu = Vec::new();
    propagate_slices(mdp, &space, policy.slices(), &mut mu);
    let expected_cost = expected_cost_slices(mdp, &space, &mu, policy.slices());
    let information: f64 = if m == Degree::Finite(0) && n_eval == Degree::Finite(policy.degree()) {
        let mut nu = Vec::new();
        information_terms_reduced(mdp, &space, &mu, policy.slices(), &mut nu).iter().sum()
    } else {
        transfer_entropy_terms(mdp, policy, m, n_eval, DEFAULT_CELL_BUDGET)?.iter().sum()
    };
    Ok(ObjectiveValue { expected_cost, information, total: expected_cost + beta * information })
}

/// `f(nu, q) = sum_t l_t(mu_t, nu_t, q_t) + l_{T+1}(mu_{T+1})` in cost units,
/// i.e. `sum mu q (c + beta log(q / nu)) + E c_{T+1}` with `mu` induced by `q`.
///
/// Returns `+inf` when some `q > 0` meets `nu = 0` on a reachable cell.
pub fn factored_objective(mdp: &FiniteMdp, prior: &ActionPrior, policy: &MemoryPolicy, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    policy.validate(mdp)?;
    prior.validate(mdp)?;
    if prior.degree() != policy.degree() {
        return Err(Error::instance(format!(
            "prior degree {} differs from policy degree {}",
            prior.degree(),
            policy.degree()
        )));
    }
    let space = HistorySpace::new(mdp, policy.degree())?;
    let mut mu = Vec::new();
    propagate_slices(mdp, &space, policy.slices(), &mut mu);
    Ok(factored_slices(mdp, &space, &mu, prior.slices(), policy.slices(), beta))
}

pub(crate) fn factored_slices(
    mdp: &FiniteMdp,
    space: &HistorySpace,
    mu: &[Vec<f64>],
    nu: &[Vec<f64>],
    q: &[Vec<f64>],
    beta: f64,
) -> f64 {
    let horizon = mdp.horizon();
    let mut total = 0.0;
    for t in 0..horizon {
        let (nx, na) = (mdp.n_states(t), mdp.n_actions(t));
        let cost = mdp.stage_cost(t);
        for h in 0..space.count(t) {
            let prior = &nu[t][h * na..(h + 1) * na];
            for x in 0..nx {
                let m = mu[t][h * nx + x];
                if m == 0.0 {
                    continue;
                }
                let qrow = &q[t][(h * nx + x) * na..(h * nx + x + 1) * na];
                for u in 0..na {
                    let qu = qrow[u];
                    let w = m * qu;
                    if w == 0.0 {
                        continue;
                    }
                    if prior[u] == 0.0 {
                        return f64::INFINITY;
                    }
                    total += w * (cost[x * na + u] + beta * (qu / prior[u]).ln());
                }
            }
        }
    }
    let nx = mdp.n_states(horizon);
    for (i, &m) in mu[horizon].iter().enumerate() {
        total += m * mdp.terminal_cost()[i % nx];
    }
    total
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("beta must be a positive finite number, got {beta}")))
    }
}

/// Reusable evaluator of `J + beta * I_{0,n}` for many policies of one
/// degree on one instance. Skips validation.
#[derive(Debug, Clone)]
pub struct ObjectiveEvaluator<'a> {
    mdp: &'a FiniteMdp,
    space: HistorySpace,
    beta: f64,
    mu: Vec<Vec<f64>>,
    nu: Vec<Vec<f64>>,
}

impl<'a> ObjectiveEvaluator<'a> {
    pub fn new(mdp: &'a FiniteMdp, degree: usize, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(ObjectiveEvaluator { mdp, space: HistorySpace::new(mdp, degree)?, beta, mu: Vec::new(), nu: Vec::new() })
    }

    pub fn space(&self) -> &HistorySpace {
        &self.space
    }

    /// Objective of the policy given as raw slices (layout of [`MemoryPolicy`]).
    pub fn evaluate(&mut self, q: &[Vec<f64>]) -> ObjectiveValue {
        propagate_slices(self.mdp, &self.space, q, &mut self.mu);
        let expected_cost = expected_cost_slices(self.mdp, &self.space, &self.mu, q);
        let information: f64 = information_terms_reduced(self.mdp, &self.space, &self.mu, q, &mut self.nu).iter().sum();
        ObjectiveValue { expected_cost, information, total: expected_cost + self.beta * information }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::belief::{induced_prior, propagate_reduced};

    fn toyish() -> FiniteMdp {
        FiniteMdp::stationary(
            2,
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, 0.0],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn zero_cost_state_independent_is_zero() {
        let mdp = FiniteMdp::stationary(3, 2, 3, vec![0.5; 12], vec![0.0; 6], vec![0.0; 2], vec![0.3, 0.7]).unwrap();
        let q = MemoryPolicy::from_fn(&mdp, 1, |t, _, _, row| {
            row.copy_from_slice(&[1.0 + t as f64, 2.0, 0.5]);
        })
        .unwrap();
        let v = objective(&mdp, &q, 2.0, Degree::Finite(0), Degree::Finite(1)).unwrap();
        assert_eq!(v.expected_cost, 0.0);
        assert!(v.information.abs() < 1e-15);
        assert!(v.total.abs() < 1e-15);
    }

    #[test]
    fn factored_at_induced_prior_equals_objective() {
        let mdp = toyish();
        let q = MemoryPolicy::from_fn(&mdp, 0, |t, _, x, row| {
            row.copy_from_slice(&[0.2 + 0.3 * x as f64, 0.5 + 0.1 * t as f64]);
        })
        .unwrap();
        let mu = propagate_reduced(&mdp, &q).unwrap();
        let nu = induced_prior(&mdp, &mu, &q).unwrap();
        let f = factored_objective(&mdp, &nu, &q, 1.7).unwrap();
        let v = objective(&mdp, &q, 1.7, Degree::Finite(0), Degree::Finite(0)).unwrap();
        assert!((f - v.total).abs() < 1e-12);
    }

    #[test]
    fn factored_diverges_on_zero_prior() {
        let mdp = toyish();
        let q = MemoryPolicy::uniform(&mdp, 0).unwrap();
        let nu = ActionPrior::new(&mdp, 0, vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        assert_eq!(factored_objective(&mdp, &nu, &q, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn beta_must_be_positive() {
        let mdp = toyish();
        let q = MemoryPolicy::uniform(&mdp, 0).unwrap();
        assert!(objective(&mdp, &q, 0.0, Degree::Finite(0), Degree::Finite(0)).is_err());
        assert!(objective(&mdp, &q, f64::NAN, Degree::Finite(0), Degree::Finite(0)).is_err());
    }

    #[test]
    fn single_step_uniform_zero_cost_vanishes() {
        let mdp = FiniteMdp::stationary(1, 2, 2, vec![0.5; 8], vec![0.0; 4], vec![0.0; 2], vec![0.5, 0.5]).unwrap();
        let q = MemoryPolicy::uniform(&mdp, 0).unwrap();
        let nu = ActionPrior::uniform(&mdp, 0).unwrap();
        assert_eq!(factored_objective(&mdp, &nu, &q, 1.0).unwrap(), 0.0);
    }
}
