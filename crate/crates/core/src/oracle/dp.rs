use serde::Serialize;

use crate::error::Result;
use crate::model::{FiniteMdp, MemoryPolicy};

/// Optimal deterministic Markov policy of the cost-only problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueIteration {
    /// `actions[t][x]`, ties broken towards the lowest action index.
    pub actions: Vec<Vec<usize>>,
    /// Cost-to-go `V_t(x)` for `t = 0..=horizon`.
    pub values: Vec<Vec<f64>>,
    /// `sum_x p_0(x) V_0(x)`.
    pub optimal_cost: f64,
}

impl ValueIteration {
    /// The greedy actions as a degree-0 policy.
    pub fn policy(&self, mdp: &FiniteMdp) -> Result<MemoryPolicy> {
        MemoryPolicy::from_fn(mdp, 0, |t, _, x, row| {
            row.fill(0.0);
            row[self.actions[t][x]] = 1.0;
        })
    }
}

/// Backward dynamic programming over the stage costs.
pub fn finite_horizon_value_iteration(mdp: &FiniteMdp) -> ValueIteration {
    let horizon = mdp.horizon();
    let mut values = vec![Vec::new(); horizon + 1];
    let mut actions = vec![Vec::new(); horizon];
    values[horizon] = mdp.terminal_cost().to_vec();
    for t in (0..horizon).rev() {
        let (nx, nu) = (mdp.n_states(t), mdp.n_actions(t));
        let next = &values[t + 1];
        let mut v = vec![0.0; nx];
        let mut a = vec![0; nx];
        for x in 0..nx {
            let mut best = (f64::INFINITY, 0);
            for u in 0..nu {
                let q = mdp.cost(t, x, u) + mdp.successors(t, x, u).iter().map(|&(xn, p)| p * next[xn]).sum::<f64>();
                if q < best.0 {
                    best = (q, u);
                }
            }
            v[x] = best.0;
            a[x] = best.1;
        }
        values[t] = v;
        actions[t] = a;
    }
    let optimal_cost = mdp.initial().iter().zip(&values[0]).filter(|(&p, _)| p > 0.0).map(|(p, v)| p * v).sum();
    ValueIteration { actions, values, optimal_cost }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::expected_cost;

    #[test]
    fn deterministic_chain_pays_path_cost() {
        // states 0..3 on a line, action 0 stays, action 1 moves right; moving costs 1,
        // staying off the end costs 5, the end is free
        let mut trans = vec![0.0; 4 * 2 * 4];
        let mut cost = vec![0.0; 8];
        for x in 0..4 {
            trans[(x * 2) * 4 + x] = 1.0;
            trans[(x * 2 + 1) * 4 + (x + 1).min(3)] = 1.0;
            cost[x * 2] = if x == 3 { 0.0 } else { 5.0 };
            cost[x * 2 + 1] = if x == 3 { 5.0 } else { 1.0 };
        }
        let mdp = FiniteMdp::stationary(3, 4, 2, trans, cost, vec![0.0; 4], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let vi = finite_horizon_value_iteration(&mdp);
        assert_eq!(vi.optimal_cost, 3.0);
        assert_eq!(vi.actions[0][0], 1);
        let q = vi.policy(&mdp).unwrap();
        assert_eq!(expected_cost(&mdp, &q).unwrap(), 3.0);
    }

    #[test]
    fn single_step_takes_argmin() {
        let mdp = FiniteMdp::stationary(
            1,
            2,
            3,
            vec![0.5; 12],
            vec![3.0, 1.0, 2.0, 0.5, 4.0, 0.5],
            vec![0.0; 2],
            vec![0.5, 0.5],
        )
        .unwrap();
        let vi = finite_horizon_value_iteration(&mdp);
        assert_eq!(vi.actions[0], vec![1, 0]);
        assert_eq!(vi.optimal_cost, 0.75);
    }
}
