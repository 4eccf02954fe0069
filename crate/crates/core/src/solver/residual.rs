use serde::{Deserialize, Serialize};

use crate::model::belief::prior_slices;
use crate::model::{FiniteMdp, HistorySpace};
use crate::solver::passes::{log_sum_exp, SolverIterate};

/// Mass below which a cell is treated as unreachable when checking the
/// almost-everywhere relations.
pub const MASS_FLOOR: f64 = 1e-12;

/// Sup-norm violation of each relation of the optimality system.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualBreakdown {
    /// `mu` against forward propagation of `q` (and `mu_0` against the initial law).
    pub belief: f64,
    /// `nu` against the marginal induced by `q` on histories with mass.
    pub prior: f64,
    /// `rho` against `c / beta - E log phi_{t+1}`.
    pub modified_cost: f64,
    /// `log phi` against the log-sum-exp of `log nu - rho`, including the terminal condition.
    pub log_partition: f64,
    /// `q` against `exp(log nu - rho - log phi)` on cells with mass.
    pub policy: f64,
}

impl ResidualBreakdown {
    pub fn max(&self) -> f64 {
        [self.belief, self.prior, self.modified_cost, self.log_partition, self.policy].into_iter().fold(0.0, f64::max)
    }
}

/// Largest violation of the optimality system at `iterate`. Zero at an exact
/// fixed point.
pub fn stationarity_residual(mdp: &FiniteMdp, iterate: &SolverIterate, beta: f64) -> f64 {
    residual_breakdown(mdp, iterate, beta).max()
}

/// Per-relation violations at `iterate`. Dimension mismatches show up as an
/// infinite residual.
pub fn residual_breakdown(mdp: &FiniteMdp, iterate: &SolverIterate, beta: f64) -> ResidualBreakdown {
    let inf = ResidualBreakdown { belief: f64::INFINITY, ..Default::default() };
    let degree = iterate.q.degree();
    let Ok(space) = HistorySpace::new(mdp, degree) else {
        return inf;
    };
    if iterate.q.validate(mdp).is_err()
        || iterate.nu.validate(mdp).is_err()
        || iterate.mu.degree() != degree
        || iterate.nu.degree() != degree
        || !shapes_match(mdp, &space, iterate)
    {
        return inf;
    }
    let horizon = mdp.horizon();
    let (mu, nu, rho, log_phi, q) =
        (iterate.mu.slices(), iterate.nu.slices(), &iterate.rho, &iterate.log_phi, iterate.q.slices());
    let mut out = ResidualBreakdown::default();

    let mut mu_ref = Vec::new();
    propagate_one_step_each(mdp, &space, mu, q, &mut mu_ref);
    out.belief = sup_diff(mu.iter().flatten(), mu_ref.iter().flatten());

    let mut nu_ref = Vec::new();
    prior_slices(mdp, &space, mu, q, &mut nu_ref);
    for t in 0..horizon {
        let (nx, na) = (mdp.n_states(t), mdp.n_actions(t));
        for h in 0..space.count(t) {
            let mass: f64 = mu[t][h * nx..(h + 1) * nx].iter().sum();
            if mass > MASS_FLOOR {
                let r = h * na..(h + 1) * na;
                out.prior = out.prior.max(sup_diff(nu[t][r.clone()].iter(), nu_ref[t][r].iter()));
            }
        }
    }

    for (i, &c) in mdp.terminal_cost().iter().cycle().take(log_phi[horizon].len()).enumerate() {
        out.log_partition = out.log_partition.max((log_phi[horizon][i] + c / beta).abs());
    }
    let mut exponents = Vec::new();
    for t in 0..horizon {
        let (nx, na, nxn) = (mdp.n_states(t), mdp.n_actions(t), mdp.n_states(t + 1));
        exponents.resize(na, 0.0);
        for h in 0..space.count(t) {
            let prior = &nu[t][h * na..(h + 1) * na];
            for x in 0..nx {
                let cell = h * nx + x;
                for u in 0..na {
                    let base = space.successor(t, h, u) * nxn;
                    let mut cont = 0.0;
                    for &(xn, p) in mdp.successors(t, x, u) {
                        cont += p * log_phi[t + 1][base + xn];
                    }
                    let expect = mdp.cost(t, x, u) / beta - cont;
                    out.modified_cost = out.modified_cost.max(abs_diff(rho[t][cell * na + u], expect));
                    exponents[u] = prior[u].ln() - rho[t][cell * na + u];
                }
                let lse = log_sum_exp(&exponents);
                out.log_partition = out.log_partition.max(abs_diff(log_phi[t][cell], lse));
                if mu[t][cell] > MASS_FLOOR {
                    for u in 0..na {
                        let expect = (exponents[u] - log_phi[t][cell]).exp();
                        out.policy = out.policy.max(abs_diff(q[t][cell * na + u], expect));
                    }
                }
            }
        }
    }
    out
}

/// `out[0]` is the initial law and `out[t + 1]` the pushforward of the given
/// `mu[t]`, so the residual checks each step rather than the whole chain.
fn propagate_one_step_each(
    mdp: &FiniteMdp,
    space: &HistorySpace,
    mu: &[Vec<f64>],
    q: &[Vec<f64>],
    out: &mut Vec<Vec<f64>>,
) {
    out.clear();
    out.push(mdp.initial().to_vec());
    let mut step = Vec::new();
    for t in 0..mdp.horizon() {
        step.clear();
        step.resize(space.count(t + 1) * mdp.n_states(t + 1), 0.0);
        let (nx, na, nxn) = (mdp.n_states(t), mdp.n_actions(t), mdp.n_states(t + 1));
        for h in 0..space.count(t) {
            for x in 0..nx {
                let m = mu[t][h * nx + x];
                if m == 0.0 {
                    continue;
                }
                for u in 0..na {
                    let w = m * q[t][(h * nx + x) * na + u];
                    if w == 0.0 {
                        continue;
                    }
                    let base = space.successor(t, h, u) * nxn;
                    for &(xn, p) in mdp.successors(t, x, u) {
                        step[base + xn] += w * p;
                    }
                }
            }
        }
        out.push(step.clone());
    }
}

fn shapes_match(mdp: &FiniteMdp, space: &HistorySpace, it: &SolverIterate) -> bool {
    let horizon = mdp.horizon();
    it.mu.slices().len() == horizon + 1
        && it.rho.len() == horizon
        && it.log_phi.len() == horizon + 1
        && (0..=horizon).all(|t| {
            let cells = space.count(t) * mdp.n_states(t);
            it.mu.slice(t).len() == cells
                && it.log_phi[t].len() == cells
                && (t == horizon || it.rho[t].len() == cells * mdp.n_actions(t))
        })
}

/// `|a - b|`, with equal infinities counting as agreement.
fn abs_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

fn sup_diff<'a>(a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> f64 {
    a.zip(b).map(|(&x, &y)| abs_diff(x, y)).fold(0.0, f64::max)
}
