//! Transfer entropy and directed information computed from exact joints.
//!
//! Two independent routes are provided:
//! - window joints over `(x_{t-m}^t, u_{t-n}^{t-1})`, which form a Markov
//!   process under a degree-`n` policy and stay small for small `(m, n)`;
//! - full trajectory joints `mu(x_0, u_0, ..., x_t)` for full-history
//!   policies, exponential in the horizon and guarded by a cell budget.
//!
//! All quantities are in nats.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::history::{MixedRadix, DEFAULT_CELL_BUDGET};
use crate::model::policy::normalize;
use crate::model::{FiniteMdp, HistorySpace, MemoryPolicy};

/// Window length of a conditioning block: a finite number of past
/// coordinates, or the whole available past.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Degree {
    Finite(usize),
    Full,
}

impl Degree {
    /// Number of past coordinates available at time `t`.
    pub fn span(self, t: usize) -> usize {
        match self {
            Degree::Finite(d) => d.min(t),
            Degree::Full => t,
        }
    }

    pub fn max(self, other: Degree) -> Degree {
        match (self, other) {
            (Degree::Finite(a), Degree::Finite(b)) => Degree::Finite(a.max(b)),
            _ => Degree::Full,
        }
    }

    /// True when `self` covers at least as many past coordinates as `other`.
    pub fn covers(self, other: Degree) -> bool {
        match (self, other) {
            (Degree::Full, _) => true,
            (Degree::Finite(_), Degree::Full) => false,
            (Degree::Finite(a), Degree::Finite(b)) => a >= b,
        }
    }
}

impl From<usize> for Degree {
    fn from(d: usize) -> Self {
        Degree::Finite(d)
    }
}

impl fmt::Display for Degree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degree::Finite(d) => write!(f, "{d}"),
            Degree::Full => f.write_str("inf"),
        }
    }
}

impl FromStr for Degree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "full" | "infinity" => Ok(Degree::Full),
            other => other
                .parse::<usize>()
                .map(Degree::Finite)
                .map_err(|_| Error::invalid(format!("degree must be a nonnegative integer or 'inf', got '{s}'"))),
        }
    }
}

/// Conditional mutual information `I(A; U | B)` from a joint laid out as
/// `[a][b][u]`. Zero-mass cells contribute nothing.
pub fn conditional_mutual_information(joint: &[f64], na: usize, nb: usize, nu: usize) -> f64 {
    debug_assert_eq!(joint.len(), na * nb * nu);
    let mut p_ab = vec![0.0; na * nb];
    let mut p_bu = vec![0.0; nb * nu];
    let mut p_b = vec![0.0; nb];
    for a in 0..na {
        for b in 0..nb {
            for u in 0..nu {
                let p = joint[(a * nb + b) * nu + u];
                p_ab[a * nb + b] += p;
                p_bu[b * nu + u] += p;
                p_b[b] += p;
            }
        }
    }
    let mut acc = 0.0;
    for a in 0..na {
        for b in 0..nb {
            for u in 0..nu {
                let p = joint[(a * nb + b) * nu + u];
                if p > 0.0 {
                    acc += p * (p.ln() + p_b[b].ln() - p_ab[a * nb + b].ln() - p_bu[b * nu + u].ln());
                }
            }
        }
    }
    acc.max(0.0)
}

/// Exact joints over `(x_{t-m}^t, u_{t-n}^{t-1})` for `t = 0..=horizon`.
///
/// Digits are ordered oldest state first, then oldest control first.
#[derive(Debug, Clone)]
pub struct WindowJoint {
    state_window: Degree,
    control_window: Degree,
    layouts: Vec<MixedRadix>,
    state_digits: Vec<usize>,
    probs: Vec<Vec<f64>>,
}

impl WindowJoint {
    pub fn state_window(&self) -> Degree {
        self.state_window
    }

    pub fn control_window(&self) -> Degree {
        self.control_window
    }

    pub fn layout(&self, t: usize) -> &MixedRadix {
        &self.layouts[t]
    }

    /// Number of state coordinates in the window at time `t`.
    pub fn state_digits(&self, t: usize) -> usize {
        self.state_digits[t]
    }

    pub fn probs(&self, t: usize) -> &[f64] {
        &self.probs[t]
    }

    /// Marginal over `(u_{t-n}^{t-1}, x_t)` for a control window `n` no
    /// larger than this joint's, laid out like a [`crate::model::ReducedBelief`] slice.
    pub fn reduced_marginal(&self, mdp: &FiniteMdp, t: usize, degree: usize) -> Vec<f64> {
        let layout = &self.layouts[t];
        let kx = self.state_digits[t];
        let ku = layout.digits() - kx;
        let keep = degree.min(t).min(ku);
        let hist_layout = MixedRadix::new(layout.cards()[layout.digits() - keep..].to_vec());
        let nx = mdp.n_states(t);
        let mut out = vec![0.0; hist_layout.size() * nx];
        let mut digits = vec![0; layout.digits()];
        for (i, &p) in self.probs[t].iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            layout.decode_into(i, &mut digits);
            let h = hist_layout.encode(&digits[layout.digits() - keep..]);
            out[h * nx + digits[kx - 1]] += p;
        }
        out
    }
}

/// Exact window joint over `(x_{t-m}^t, u_{t-n}^{t-1})` with `n` the policy
/// degree.
pub fn propagate_window(mdp: &FiniteMdp, policy: &MemoryPolicy, m: Degree, budget: usize) -> Result<WindowJoint> {
    window_joint(mdp, policy, m, Degree::Finite(policy.degree()), budget)
}

/// Window joint with a control window `n_window` at least the policy degree.
pub fn window_joint(
    mdp: &FiniteMdp,
    policy: &MemoryPolicy,
    m: Degree,
    n_window: Degree,
    budget: usize,
) -> Result<WindowJoint> {
    policy.validate(mdp)?;
    if !n_window.covers(Degree::Finite(policy.degree())) {
        return Err(Error::invalid(format!(
            "control window {n_window} is shorter than the policy degree {}",
            policy.degree()
        )));
    }
    let space = HistorySpace::new(mdp, policy.degree())?;
    let horizon = mdp.horizon();
    let mut layouts = Vec::with_capacity(horizon + 1);
    let mut state_digits = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let kx = m.span(t) + 1;
        let ku = n_window.span(t);
        let mut cards: Vec<usize> = (t + 1 - kx..=t).map(|s| mdp.n_states(s)).collect();
        cards.extend((t - ku..t).map(|s| mdp.n_actions(s)));
        layouts.push(MixedRadix::bounded(cards, budget, &format!("window joint at t={t}"))?);
        state_digits.push(kx);
    }

    let mut probs: Vec<Vec<f64>> = Vec::with_capacity(horizon + 1);
    probs.push(mdp.initial().to_vec());
    let mut digits = Vec::new();
    let mut next_digits = Vec::new();
    for t in 0..horizon {
        let cur = &layouts[t];
        let next = &layouts[t + 1];
        let (kx, kx_next) = (state_digits[t], state_digits[t + 1]);
        let ku = cur.digits() - kx;
        let ku_next = next.digits() - kx_next;
        // old coordinates surviving the shift (the newest ones)
        let keep_x = kx_next - 1;
        let keep_u = ku_next.saturating_sub(1);
        let hist_len = space.length(t);
        let nu = mdp.n_actions(t);
        let mut out = vec![0.0; next.size()];
        digits.resize(cur.digits(), 0);
        next_digits.resize(next.digits(), 0);
        for (i, &w) in probs[t].iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            cur.decode_into(i, &mut digits);
            let x = digits[kx - 1];
            let h = space.layout(t).encode(&digits[cur.digits() - hist_len..]);
            let qrow = policy.row(mdp, t, h, x);
            next_digits[..keep_x].copy_from_slice(&digits[kx - keep_x..kx]);
            next_digits[kx_next..kx_next + keep_u].copy_from_slice(&digits[kx + ku - keep_u..kx + ku]);
            for (u, &qu) in qrow.iter().enumerate() {
                if qu == 0.0 {
                    continue;
                }
                if ku_next > 0 {
                    next_digits[next.digits() - 1] = u;
                }
                for &(xn, p) in mdp.successors(t, x, u) {
                    next_digits[kx_next - 1] = xn;
                    out[next.encode(&next_digits)] += w * qu * p;
                }
            }
            debug_assert!(nu == qrow.len());
        }
        probs.push(out);
    }
    Ok(WindowJoint { state_window: m, control_window: n_window, layouts, state_digits, probs })
}

/// Per-time terms `I(X_{t-m}^t; U_t | U_{t-n}^{t-1})` for a degree-`k` policy,
/// evaluated with any `n` (the window is widened to `max(k, n)`).
pub fn transfer_entropy_terms(
    mdp: &FiniteMdp,
    policy: &MemoryPolicy,
    m: Degree,
    n_eval: Degree,
    budget: usize,
) -> Result<Vec<f64>> {
    let n_window = n_eval.max(Degree::Finite(policy.degree()));
    let joint = window_joint(mdp, policy, m, n_window, budget)?;
    let space = HistorySpace::new(mdp, policy.degree())?;
    let mut terms = Vec::with_capacity(mdp.horizon());
    let mut digits = Vec::new();
    for t in 0..mdp.horizon() {
        let layout = joint.layout(t);
        let kx = joint.state_digits(t);
        let ku = layout.digits() - kx;
        let kb = n_eval.span(t);
        let a_layout = MixedRadix::new(layout.cards()[..kx].to_vec());
        let b_layout = MixedRadix::new(layout.cards()[layout.digits() - kb..].to_vec());
        let nu = mdp.n_actions(t);
        let cells = a_layout
            .size()
            .checked_mul(b_layout.size())
            .and_then(|s| s.checked_mul(nu))
            .filter(|&s| s <= budget)
            .ok_or_else(|| Error::resource(format!("information joint at t={t} exceeds {budget} cells")))?;
        let mut p = vec![0.0; cells];
        let hist_len = space.length(t);
        digits.resize(layout.digits(), 0);
        for (i, &w) in joint.probs(t).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            layout.decode_into(i, &mut digits);
            let a = a_layout.encode(&digits[..kx]);
            let b = b_layout.encode(&digits[kx + ku - kb..]);
            let h = space.layout(t).encode(&digits[kx + ku - hist_len..]);
            let qrow = policy.row(mdp, t, h, digits[kx - 1]);
            for (u, &qu) in qrow.iter().enumerate() {
                p[(a * b_layout.size() + b) * nu + u] += w * qu;
            }
        }
        terms.push(conditional_mutual_information(&p, a_layout.size(), b_layout.size(), nu));
    }
    Ok(terms)
}

/// Transfer entropy of degree `(m, n)` in nats.
pub fn transfer_entropy(
    mdp: &FiniteMdp,
    policy: &MemoryPolicy,
    m: Degree,
    n_eval: Degree,
    budget: usize,
) -> Result<f64> {
    Ok(transfer_entropy_terms(mdp, policy, m, n_eval, budget)?.iter().sum())
}

/// A full-history policy `q_t(u_t | x_0, u_0, ..., x_t)`.
///
/// `slices[t]` is row-major over `(prefix, u_t)` where the prefix is indexed by
/// [`HistoryPolicy::prefix_layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryPolicy {
    slices: Vec<Vec<f64>>,
}

impl HistoryPolicy {
    /// Mixed-radix layout of `(x_0, u_0, ..., u_{t-1}, x_t)`.
    pub fn prefix_layout(mdp: &FiniteMdp, t: usize, budget: usize) -> Result<MixedRadix> {
        let mut cards = Vec::with_capacity(2 * t + 1);
        for s in 0..t {
            cards.push(mdp.n_states(s));
            cards.push(mdp.n_actions(s));
        }
        cards.push(mdp.n_states(t));
        MixedRadix::bounded(cards, budget, &format!("trajectory prefix at t={t}"))
    }

    /// Validates slice shapes and row normalization.
    pub fn new(mdp: &FiniteMdp, slices: Vec<Vec<f64>>, budget: usize) -> Result<Self> {
        if slices.len() != mdp.horizon() {
            return Err(Error::instance("history policy horizon does not match the instance"));
        }
        for (t, slice) in slices.iter().enumerate() {
            let layout = Self::prefix_layout(mdp, t, budget)?;
            let nu = mdp.n_actions(t);
            if slice.len() != layout.size() * nu {
                return Err(Error::instance(format!("history policy slice {t} has the wrong size")));
            }
            for (i, row) in slice.chunks_exact(nu).enumerate() {
                let s: f64 = row.iter().sum();
                if row.iter().any(|&v| !(v >= 0.0)) || (s - 1.0).abs() > crate::model::policy::SLICE_SUM_TOL {
                    return Err(Error::instance(format!("history policy row t={t} prefix={i} is not a distribution")));
                }
            }
        }
        Ok(HistoryPolicy { slices })
    }

    pub fn from_fn<F>(mdp: &FiniteMdp, budget: usize, mut fill: F) -> Result<Self>
    where
        F: FnMut(usize, &[usize], &mut [f64]),
    {
        let mut slices = Vec::with_capacity(mdp.horizon());
        let mut digits = Vec::new();
        for t in 0..mdp.horizon() {
            let layout = Self::prefix_layout(mdp, t, budget)?;
            let nu = mdp.n_actions(t);
            let mut slice = vec![0.0; layout.size() * nu];
            digits.resize(layout.digits(), 0);
            for (i, row) in slice.chunks_exact_mut(nu).enumerate() {
                layout.decode_into(i, &mut digits);
                fill(t, &digits, row);
                normalize(row).map_err(|_| Error::invalid(format!("history policy row t={t} has no mass")))?;
            }
            slices.push(slice);
        }
        Ok(HistoryPolicy { slices })
    }

    /// Embeds a degree-`n` policy into the full-history class.
    pub fn from_memory(mdp: &FiniteMdp, policy: &MemoryPolicy, budget: usize) -> Result<Self> {
        policy.validate(mdp)?;
        let space = HistorySpace::new(mdp, policy.degree())?;
        let mut controls = Vec::new();
        Self::from_fn(mdp, budget, |t, prefix, row| {
            controls.clear();
            let h_len = space.length(t);
            controls.extend((t - h_len..t).map(|s| prefix[2 * s + 1]));
            let h = space.layout(t).encode(&controls);
            row.copy_from_slice(policy.row(mdp, t, h, prefix[2 * t]));
        })
    }

    pub fn uniform(mdp: &FiniteMdp, budget: usize) -> Result<Self> {
        Self::from_fn(mdp, budget, |_, _, row| row.fill(1.0))
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }

    pub fn slices_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.slices
    }
}

/// `mu_t(x_0, u_0, ..., x_t)` for `t = 0..=horizon`, layouts as in
/// [`HistoryPolicy::prefix_layout`].
#[derive(Debug, Clone)]
pub struct TrajectoryJoint {
    layouts: Vec<MixedRadix>,
    probs: Vec<Vec<f64>>,
}

impl TrajectoryJoint {
    pub fn layout(&self, t: usize) -> &MixedRadix {
        &self.layouts[t]
    }

    pub fn probs(&self, t: usize) -> &[f64] {
        &self.probs[t]
    }

    /// Expected stage-additive cost of the trajectory distribution.
    pub fn expected_cost(&self, mdp: &FiniteMdp, policy: &HistoryPolicy) -> f64 {
        let horizon = mdp.horizon();
        let mut total = 0.0;
        for t in 0..horizon {
            let nx = mdp.n_states(t);
            let nu = mdp.n_actions(t);
            for (i, &w) in self.probs[t].iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let x = i % nx;
                let qrow = &policy.slices[t][i * nu..(i + 1) * nu];
                for (u, &qu) in qrow.iter().enumerate() {
                    total += w * qu * mdp.cost(t, x, u);
                }
            }
        }
        let nx = mdp.n_states(horizon);
        for (i, &w) in self.probs[horizon].iter().enumerate() {
            total += w * mdp.terminal_cost()[i % nx];
        }
        total
    }

    /// Per-time terms `I(X_{t-m}^t; U_t | U_{t-n}^{t-1})`.
    pub fn information_terms(
        &self,
        mdp: &FiniteMdp,
        policy: &HistoryPolicy,
        m: Degree,
        n: Degree,
        budget: usize,
    ) -> Result<Vec<f64>> {
        let mut terms = Vec::with_capacity(mdp.horizon());
        let mut digits = Vec::new();
        let mut a_digits = Vec::new();
        let mut b_digits = Vec::new();
        for t in 0..mdp.horizon() {
            let layout = &self.layouts[t];
            let (ka, kb) = (m.span(t) + 1, n.span(t));
            let a_layout = MixedRadix::new((t + 1 - ka..=t).map(|s| mdp.n_states(s)).collect());
            let b_layout = MixedRadix::new((t - kb..t).map(|s| mdp.n_actions(s)).collect());
            let nu = mdp.n_actions(t);
            let cells = a_layout
                .size()
                .checked_mul(b_layout.size())
                .and_then(|s| s.checked_mul(nu))
                .filter(|&s| s <= budget)
                .ok_or_else(|| Error::resource(format!("information joint at t={t} exceeds {budget} cells")))?;
            let mut p = vec![0.0; cells];
            digits.resize(layout.digits(), 0);
            for (i, &w) in self.probs[t].iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                layout.decode_into(i, &mut digits);
                a_digits.clear();
                a_digits.extend((t + 1 - ka..=t).map(|s| digits[2 * s]));
                b_digits.clear();
                b_digits.extend((t - kb..t).map(|s| digits[2 * s + 1]));
                let a = a_layout.encode(&a_digits);
                let b = b_layout.encode(&b_digits);
                let qrow = &policy.slices[t][i * nu..(i + 1) * nu];
                for (u, &qu) in qrow.iter().enumerate() {
                    p[(a * b_layout.size() + b) * nu + u] += w * qu;
                }
            }
            terms.push(conditional_mutual_information(&p, a_layout.size(), b_layout.size(), nu));
        }
        Ok(terms)
    }
}

/// Exhaustive joint of the whole trajectory under a full-history policy.
pub fn trajectory_joint(mdp: &FiniteMdp, policy: &HistoryPolicy, budget: usize) -> Result<TrajectoryJoint> {
    let horizon = mdp.horizon();
    if policy.slices.len() != horizon {
        return Err(Error::instance("history policy horizon does not match the instance"));
    }
    let layouts = (0..=horizon).map(|t| HistoryPolicy::prefix_layout(mdp, t, budget)).collect::<Result<Vec<_>>>()?;
    for t in 0..horizon {
        if policy.slices[t].len() != layouts[t].size() * mdp.n_actions(t) {
            return Err(Error::instance(format!("history policy slice {t} has the wrong size")));
        }
    }
    let mut probs: Vec<Vec<f64>> = Vec::with_capacity(horizon + 1);
    probs.push(mdp.initial().to_vec());
    for t in 0..horizon {
        let (nx, nu, nxn) = (mdp.n_states(t), mdp.n_actions(t), mdp.n_states(t + 1));
        let mut out = vec![0.0; layouts[t + 1].size()];
        for (i, &w) in probs[t].iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let x = i % nx;
            for u in 0..nu {
                let qu = policy.slices[t][i * nu + u];
                if qu == 0.0 {
                    continue;
                }
                let base = (i * nu + u) * nxn;
                for &(xn, p) in mdp.successors(t, x, u) {
                    out[base + xn] += w * qu * p;
                }
            }
        }
        probs.push(out);
    }
    Ok(TrajectoryJoint { layouts, probs })
}

/// Directed information `sum_t I(X^t; U_t | U^{t-1})` by exhaustive enumeration.
pub fn directed_information(mdp: &FiniteMdp, policy: &HistoryPolicy, budget: usize) -> Result<f64> {
    let joint = trajectory_joint(mdp, policy, budget)?;
    Ok(joint.information_terms(mdp, policy, Degree::Full, Degree::Full, budget)?.iter().sum())
}

/// Directed information of a degree-`n` policy, via its full-history embedding.
pub fn directed_information_of(mdp: &FiniteMdp, policy: &MemoryPolicy) -> Result<f64> {
    let lifted = HistoryPolicy::from_memory(mdp, policy, DEFAULT_CELL_BUDGET)?;
    directed_information(mdp, &lifted, DEFAULT_CELL_BUDGET)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn single_step_copy() -> FiniteMdp {
        FiniteMdp::stationary(1, 2, 2, vec![0.5; 8], vec![0.0, 1.0, 1.0, 0.0], vec![0.0; 2], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn cmi_of_copied_bit_is_ln2() {
        let joint = [0.5, 0.0, 0.0, 0.5];
        assert!((conditional_mutual_information(&joint, 2, 1, 2) - LN_2).abs() < 1e-15);
        let indep = [0.25; 4];
        assert_eq!(conditional_mutual_information(&indep, 2, 1, 2), 0.0);
    }

    #[test]
    fn copy_policy_carries_one_bit() {
        let mdp = single_step_copy();
        let q = MemoryPolicy::from_fn(&mdp, 0, |_, _, x, row| {
            row.fill(0.0);
            row[x] = 1.0;
        })
        .unwrap();
        let te = transfer_entropy(&mdp, &q, Degree::Finite(0), Degree::Finite(0), DEFAULT_CELL_BUDGET).unwrap();
        assert!((te - LN_2).abs() < 1e-15);
        let di = directed_information_of(&mdp, &q).unwrap();
        assert!((di - LN_2).abs() < 1e-15);
    }

    #[test]
    fn degree_parsing() {
        assert_eq!("3".parse::<Degree>().unwrap(), Degree::Finite(3));
        assert_eq!("inf".parse::<Degree>().unwrap(), Degree::Full);
        assert!("-1".parse::<Degree>().is_err());
        assert!(Degree::Full.covers(Degree::Finite(9)));
        assert!(!Degree::Finite(1).covers(Degree::Finite(2)));
    }

    #[test]
    fn window_guard_triggers() {
        let mdp = FiniteMdp::stationary(30, 4, 4, vec![0.25; 64], vec![0.0; 16], vec![0.0; 4], vec![0.25; 4]).unwrap();
        let q = MemoryPolicy::uniform(&mdp, 0).unwrap();
        let err = transfer_entropy(&mdp, &q, Degree::Full, Degree::Finite(0), 1 << 20).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
        let hp = HistoryPolicy::uniform(&mdp, 1 << 10);
        assert!(matches!(hp, Err(Error::Resource(_))));
    }
}
