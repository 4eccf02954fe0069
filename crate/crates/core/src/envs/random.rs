use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FiniteMdp;

/// Size limits for [`random_instance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub max_horizon: usize,
    pub max_states: usize,
    pub max_actions: usize,
    /// Use the limits themselves instead of drawing sizes below them.
    pub exact: bool,
}

impl RandomSpec {
    pub fn new(max_horizon: usize, max_states: usize, max_actions: usize) -> Self {
        RandomSpec { max_horizon, max_states, max_actions, exact: false }
    }

    /// Instances with exactly these sizes.
    pub fn exact(horizon: usize, states: usize, actions: usize) -> Self {
        RandomSpec { exact: true, ..Self::new(horizon, states, actions) }
    }
}

/// Random instance with per-time cardinalities drawn from `1..=max`,
/// transition rows that are sparse about a third of the time, stage costs in
/// `[-0.5, 2)` and terminal costs in `[0, 2)`.
pub fn random_instance<R: Rng>(spec: RandomSpec, rng: &mut R) -> Result<FiniteMdp> {
    if spec.max_horizon == 0 || spec.max_states == 0 || spec.max_actions == 0 {
        return Err(Error::invalid("random instance limits must be positive"));
    }
    let mut draw = |max: usize| if spec.exact { max } else { rng.random_range(1..=max) };
    let horizon = draw(spec.max_horizon);
    let states: Vec<usize> = (0..=horizon).map(|_| draw(spec.max_states)).collect();
    let actions: Vec<usize> = (0..horizon).map(|_| draw(spec.max_actions)).collect();
    let mut transition = Vec::with_capacity(horizon);
    let mut stage_cost = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let (nx, nu, nxn) = (states[t], actions[t], states[t + 1]);
        let mut slice = Vec::with_capacity(nx * nu * nxn);
        for _ in 0..nx * nu {
            slice.extend(random_distribution(nxn, rng));
        }
        transition.push(slice);
        stage_cost.push((0..nx * nu).map(|_| rng.random_range(-0.5..2.0)).collect());
    }
    let terminal = (0..states[horizon]).map(|_| rng.random_range(0.0..2.0)).collect();
    let initial = random_distribution(states[0], rng);
    FiniteMdp::new(horizon, states, actions, transition, stage_cost, terminal, initial)
}

/// A distribution on `n` points; with probability 1/3 some entries are zero.
fn random_distribution<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let sparse = rng.random_bool(1.0 / 3.0);
    let mut p: Vec<f64> =
        (0..n).map(|_| if sparse && rng.random_bool(0.5) { 0.0 } else { -(1.0 - rng.random::<f64>()).ln() }).collect();
    if p.iter().all(|&v| v == 0.0) {
        p[rng.random_range(0..n)] = 1.0;
    }
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    // push the rounding residue onto the largest entry so rows sum to 1 tightly
    let err = 1.0 - p.iter().sum::<f64>();
    let (imax, _) = p.iter().enumerate().fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    p[imax] += err;
    p
}
