use crate::error::{Error, Result};

/// Tolerance on the row sums of every probability vector in an instance.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// A finite-horizon MDP with time-varying finite state and action spaces.
///
/// Times are zero-based: decisions are taken at `t = 0..horizon`, states live
/// at `t = 0..=horizon`, and the terminal cost is charged on the state at
/// `t = horizon`.
///
/// Array layouts:
/// - `transition[t]` is row-major over `(x_t, u_t, x_{t+1})`;
/// - `stage_cost[t]` is row-major over `(x_t, u_t)`.
#[derive(Debug, Clone)]
pub struct FiniteMdp {
    horizon: usize,
    state_card: Vec<usize>,
    action_card: Vec<usize>,
    transition: Vec<Vec<f64>>,
    stage_cost: Vec<Vec<f64>>,
    terminal_cost: Vec<f64>,
    initial: Vec<f64>,
    kernels: Vec<SparseKernel>,
}

impl PartialEq for FiniteMdp {
    fn eq(&self, other: &Self) -> bool {
        self.horizon == other.horizon
            && self.state_card == other.state_card
            && self.action_card == other.action_card
            && self.transition == other.transition
            && self.stage_cost == other.stage_cost
            && self.terminal_cost == other.terminal_cost
            && self.initial == other.initial
    }
}

/// Nonzero entries of one transition slice, grouped by `(x, u)`.
#[derive(Debug, Clone)]
struct SparseKernel {
    offsets: Vec<usize>,
    entries: Vec<(usize, f64)>,
}

impl SparseKernel {
    fn build(dense: &[f64], nx: usize, nu: usize, nx_next: usize) -> Self {
        let mut offsets = Vec::with_capacity(nx * nu + 1);
        let mut entries = Vec::new();
        offsets.push(0);
        for row in dense.chunks_exact(nx_next).take(nx * nu) {
            for (xn, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    entries.push((xn, p));
                }
            }
            offsets.push(entries.len());
        }
        SparseKernel { offsets, entries }
    }
}

impl FiniteMdp {
    /// Builds and validates an instance.
    ///
    /// `state_card` has `horizon + 1` entries and `action_card` has `horizon`.
    pub fn new(
        horizon: usize,
        state_card: Vec<usize>,
        action_card: Vec<usize>,
        transition: Vec<Vec<f64>>,
        stage_cost: Vec<Vec<f64>>,
        terminal_cost: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::instance("horizon must be positive"));
        }
        if state_card.len() != horizon + 1 {
            return Err(Error::instance(format!(
                "states: expected {} per-time cardinalities, got {}",
                horizon + 1,
                state_card.len()
            )));
        }
        if action_card.len() != horizon {
            return Err(Error::instance(format!(
                "actions: expected {horizon} per-time cardinalities, got {}",
                action_card.len()
            )));
        }
        if let Some(t) = state_card.iter().position(|&c| c == 0) {
            return Err(Error::instance(format!("states[{t}] is empty")));
        }
        if let Some(t) = action_card.iter().position(|&c| c == 0) {
            return Err(Error::instance(format!("actions[{t}] is empty")));
        }
        if transition.len() != horizon {
            return Err(Error::instance(format!("transition: expected {horizon} slices, got {}", transition.len())));
        }
        if stage_cost.len() != horizon {
            return Err(Error::instance(format!("stage_cost: expected {horizon} slices, got {}", stage_cost.len())));
        }
        for t in 0..horizon {
            let (nx, nu, nxn) = (state_card[t], action_card[t], state_card[t + 1]);
            if transition[t].len() != nx * nu * nxn {
                return Err(Error::instance(format!(
                    "transition[{t}]: expected {nx}x{nu}x{nxn} entries, got {}",
                    transition[t].len()
                )));
            }
            for x in 0..nx {
                for u in 0..nu {
                    let row = &transition[t][(x * nu + u) * nxn..(x * nu + u + 1) * nxn];
                    check_distribution(row)
                        .map_err(|why| Error::instance(format!("transition[t={t}][x={x}][u={u}] {why}")))?;
                }
            }
            if stage_cost[t].len() != nx * nu {
                return Err(Error::instance(format!(
                    "stage_cost[{t}]: expected {nx}x{nu} entries, got {}",
                    stage_cost[t].len()
                )));
            }
            if let Some(i) = stage_cost[t].iter().position(|c| !c.is_finite()) {
                return Err(Error::instance(format!("stage_cost[t={t}][x={}][u={}] is not finite", i / nu, i % nu)));
            }
        }
        if terminal_cost.len() != state_card[horizon] {
            return Err(Error::instance(format!(
                "terminal_cost: expected {} entries, got {}",
                state_card[horizon],
                terminal_cost.len()
            )));
        }
        if let Some(x) = terminal_cost.iter().position(|c| !c.is_finite()) {
            return Err(Error::instance(format!("terminal_cost[x={x}] is not finite")));
        }
        if initial.len() != state_card[0] {
            return Err(Error::instance(format!("initial: expected {} entries, got {}", state_card[0], initial.len())));
        }
        check_distribution(&initial).map_err(|why| Error::instance(format!("initial {why}")))?;

        let kernels = (0..horizon)
            .map(|t| SparseKernel::build(&transition[t], state_card[t], action_card[t], state_card[t + 1]))
            .collect();
        Ok(FiniteMdp { horizon, state_card, action_card, transition, stage_cost, terminal_cost, initial, kernels })
    }

    /// Builds a time-invariant instance by replicating one transition and
    /// one stage-cost slice over the horizon.
    pub fn stationary(
        horizon: usize,
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        stage_cost: Vec<f64>,
        terminal_cost: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        FiniteMdp::new(
            horizon,
            vec![n_states; horizon + 1],
            vec![n_actions; horizon],
            vec![transition; horizon],
            vec![stage_cost; horizon],
            terminal_cost,
            initial,
        )
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of states at time `t` (`0..=horizon`).
    pub fn n_states(&self, t: usize) -> usize {
        self.state_card[t]
    }

    /// Number of actions at time `t` (`0..horizon`).
    pub fn n_actions(&self, t: usize) -> usize {
        self.action_card[t]
    }

    pub fn state_cards(&self) -> &[usize] {
        &self.state_card
    }

    pub fn action_cards(&self) -> &[usize] {
        &self.action_card
    }

    pub fn transition(&self, t: usize) -> &[f64] {
        &self.transition[t]
    }

    /// `p_{t+1}(x' | x, u)`.
    pub fn prob(&self, t: usize, x: usize, u: usize, x_next: usize) -> f64 {
        let nu = self.action_card[t];
        let nxn = self.state_card[t + 1];
        self.transition[t][(x * nu + u) * nxn + x_next]
    }

    /// The dense row `p_{t+1}(. | x, u)`.
    pub fn transition_row(&self, t: usize, x: usize, u: usize) -> &[f64] {
        let nu = self.action_card[t];
        let nxn = self.state_card[t + 1];
        let start = (x * nu + u) * nxn;
        &self.transition[t][start..start + nxn]
    }

    /// Nonzero `(x', p)` pairs of `p_{t+1}(. | x, u)`.
    pub fn successors(&self, t: usize, x: usize, u: usize) -> &[(usize, f64)] {
        let k = &self.kernels[t];
        let row = x * self.action_card[t] + u;
        &k.entries[k.offsets[row]..k.offsets[row + 1]]
    }

    pub fn stage_cost(&self, t: usize) -> &[f64] {
        &self.stage_cost[t]
    }

    pub fn cost(&self, t: usize, x: usize, u: usize) -> f64 {
        self.stage_cost[t][x * self.action_card[t] + u]
    }

    pub fn terminal_cost(&self) -> &[f64] {
        &self.terminal_cost
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// True when every transition and stage-cost slice equals the first.
    pub fn is_stationary(&self) -> bool {
        self.state_card.windows(2).all(|w| w[0] == w[1])
            && self.action_card.windows(2).all(|w| w[0] == w[1])
            && self.transition.windows(2).all(|w| w[0] == w[1])
            && self.stage_cost.windows(2).all(|w| w[0] == w[1])
    }

    /// A copy with every stage and terminal cost divided by `scale`.
    pub fn with_costs_divided(&self, scale: f64) -> FiniteMdp {
        let mut out = self.clone();
        for slice in &mut out.stage_cost {
            for c in slice.iter_mut() {
                *c /= scale;
            }
        }
        for c in &mut out.terminal_cost {
            *c /= scale;
        }
        out
    }
}

fn check_distribution(p: &[f64]) -> std::result::Result<(), String> {
    if let Some(i) = p.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(format!("has an invalid entry {} at index {i}", p[i]));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_SUM_TOL {
        return Err(format!("sums to {s}, not 1"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin() -> FiniteMdp {
        // x' = u, cost 1 on mismatch
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
    fn accessors_follow_layout() {
        let mdp = coin();
        assert_eq!(mdp.prob(0, 0, 1, 1), 1.0);
        assert_eq!(mdp.prob(1, 1, 0, 0), 1.0);
        assert_eq!(mdp.cost(0, 0, 1), 1.0);
        assert_eq!(mdp.successors(0, 1, 0), &[(0, 1.0)]);
        assert!(mdp.is_stationary());
    }

    #[test]
    fn rejects_bad_row_with_indices() {
        let mut tr = vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        tr[2] = 0.0;
        tr[3] = 0.99;
        let err =
            FiniteMdp::stationary(1, 2, 2, tr, vec![0.0; 4], vec![0.0; 2], vec![0.5, 0.5]).unwrap_err().to_string();
        assert!(err.contains("t=0") && err.contains("x=0") && err.contains("u=1"), "{err}");
    }

    #[test]
    fn rejects_non_finite_cost_and_bad_initial() {
        let tr = vec![1.0, 0.0, 1.0, 0.0];
        let err =
            FiniteMdp::stationary(1, 2, 1, tr.clone(), vec![0.0, f64::NAN], vec![0.0; 2], vec![0.5, 0.5]).unwrap_err();
        assert!(err.to_string().contains("x=1"));
        let err = FiniteMdp::stationary(1, 2, 1, tr, vec![0.0; 2], vec![0.0; 2], vec![0.6, 0.5]).unwrap_err();
        assert!(err.to_string().contains("initial"));
    }

    #[test]
    fn negative_costs_are_allowed() {
        let tr = vec![1.0, 1.0];
        assert!(FiniteMdp::stationary(1, 1, 2, tr, vec![-3.0, -1.0], vec![-2.0], vec![1.0]).is_ok());
    }

    #[test]
    fn cost_division_scales_everything() {
        let mdp = coin().with_costs_divided(4.0);
        assert_eq!(mdp.cost(1, 1, 0), 0.25);
    }
}
