use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::history::DEFAULT_CELL_BUDGET;
use crate::model::{
    conditional_mutual_information, trajectory_joint, Degree, FiniteMdp, HistoryPolicy, MemoryPolicy, MixedRadix,
    ObjectiveEvaluator, ObjectiveValue,
};
use crate::oracle::grid::{minimize_over_simplices, COARSE_BUDGET};

/// Best degree-`n` policy found by exhaustive search.
#[derive(Debug, Clone, Serialize)]
pub struct BruteForceResult {
    pub policy: MemoryPolicy,
    pub value: ObjectiveValue,
    pub evaluations: usize,
    pub coarse_spacing: f64,
    pub final_spacing: f64,
}

/// Minimizes `J + beta * I_{0,n}` over all degree-`n` policies by gridding
/// every policy row jointly, then refining the best grid points down to a
/// step of 1e-7.
///
/// Refuses instances with more than six free policy coordinates.
pub fn brute_force_policy_search(
    mdp: &FiniteMdp,
    beta: f64,
    degree: usize,
    resolution: f64,
) -> Result<BruteForceResult> {
    let mut eval = ObjectiveEvaluator::new(mdp, degree, beta)?;
    let space = eval.space().clone();
    let mut row_sizes = Vec::new();
    for t in 0..mdp.horizon() {
        row_sizes.extend(std::iter::repeat_n(mdp.n_actions(t), space.count(t) * mdp.n_states(t)));
    }
    let mut slices: Vec<Vec<f64>> =
        (0..mdp.horizon()).map(|t| vec![0.0; space.count(t) * mdp.n_states(t) * mdp.n_actions(t)]).collect();
    let fill = |rows: &[Vec<f64>], slices: &mut [Vec<f64>]| {
        let mut r = 0;
        for slice in slices.iter_mut() {
            for chunk in slice.chunks_exact_mut(rows[r].len()) {
                chunk.copy_from_slice(&rows[r]);
                r += 1;
            }
        }
    };
    let found = minimize_over_simplices(&row_sizes, resolution, COARSE_BUDGET, POLISH_STEP, |rows| {
        fill(rows, &mut slices);
        eval.evaluate(&slices).total
    })?;
    fill(&found.rows, &mut slices);
    let value = eval.evaluate(&slices);
    Ok(BruteForceResult {
        policy: MemoryPolicy::new(mdp, degree, slices)?,
        value,
        evaluations: found.evaluations,
        coarse_spacing: found.coarse_spacing,
        final_spacing: found.final_spacing,
    })
}

/// Optimum over full-history policies `q_t(u_t | x_0, u_0, ..., x_t)`.
#[derive(Debug, Clone)]
pub struct HistoryOptimum {
    pub policy: HistoryPolicy,
    pub value: ObjectiveValue,
    /// Sweeps used by the last-stage inner solver at the returned point.
    pub inner_iterations: usize,
}

/// Final compass step of the degree-`n` search; fine enough that the grid
/// error on smooth objectives is far below 1e-9.
const POLISH_STEP: f64 = 1e-7;

/// Coarse grid size for the first-stage search of the full-history optimum.
const HISTORY_OUTER_BUDGET: usize = 2_500;

const INNER_MAX_ITERS: usize = 20_000;

/// Minimizes `J + beta * sum_t I(X_{t-m}^t; U_t | U_{t-n}^{t-1})` over
/// full-history policies on instances with horizon at most 2.
///
/// The first-stage policy is gridded; for each grid point the last-stage
/// problem is solved by exponentiated-gradient descent on its rows, which
/// reduces to the classical alternating iteration when the rows depend only
/// on the conditioning variables of the information term.
pub fn full_history_optimum(
    mdp: &FiniteMdp,
    beta: f64,
    m: Degree,
    n: Degree,
    resolution: f64,
) -> Result<HistoryOptimum> {
    crate::model::objective::check_beta(beta)?;
    let horizon = mdp.horizon();
    if horizon > 2 {
        return Err(Error::resource(format!("full-history search needs horizon at most 2, got {horizon}")));
    }
    let last = horizon - 1;
    let inner = LastStage::new(mdp, last, m, n)?;
    let (nx0, nu0) = (mdp.n_states(0), mdp.n_actions(0));

    let evaluate_first = |rows: &[Vec<f64>]| -> (f64, Vec<f64>, usize) {
        if last == 0 {
            let (v, q, it) = inner.solve(mdp.initial(), beta);
            return (v, q, it);
        }
        let mut joint = vec![0.0; nx0 * nu0];
        let mut cost = 0.0;
        let mut prefix = vec![0.0; nx0 * nu0 * mdp.n_states(1)];
        for x in 0..nx0 {
            let p = mdp.initial()[x];
            for u in 0..nu0 {
                let w = p * rows[x][u];
                joint[x * nu0 + u] = w;
                if w == 0.0 {
                    continue;
                }
                cost += w * mdp.cost(0, x, u);
                for &(xn, pn) in mdp.successors(0, x, u) {
                    prefix[(x * nu0 + u) * mdp.n_states(1) + xn] += w * pn;
                }
            }
        }
        let info = conditional_mutual_information(&joint, nx0, 1, nu0);
        let (v, q, it) = inner.solve(&prefix, beta);
        (cost + beta * info + v, q, it)
    };

    let first_rows: Vec<Vec<f64>> = if last == 0 {
        Vec::new()
    } else {
        let found =
            minimize_over_simplices(&vec![nu0; nx0], resolution, HISTORY_OUTER_BUDGET, resolution / 4.0, |rows| {
                evaluate_first(rows).0
            })?;
        found.rows
    };
    let (_, last_slice, inner_iterations) = evaluate_first(&first_rows);
    let mut slices = Vec::with_capacity(horizon);
    if last == 1 {
        slices.push(first_rows.concat());
    }
    slices.push(last_slice);
    let policy = HistoryPolicy::new(mdp, slices, DEFAULT_CELL_BUDGET)?;

    let joint = trajectory_joint(mdp, &policy, DEFAULT_CELL_BUDGET)?;
    let expected_cost = joint.expected_cost(mdp, &policy);
    let information: f64 = joint.information_terms(mdp, &policy, m, n, DEFAULT_CELL_BUDGET)?.iter().sum();
    Ok(HistoryOptimum {
        policy,
        value: ObjectiveValue { expected_cost, information, total: expected_cost + beta * information },
        inner_iterations,
    })
}

/// Last-stage problem over prefixes `s = (x_0, u_0, ..., x_t)`.
struct LastStage {
    nu: usize,
    /// Effective cost `c_t(x_t, u) + E c_{T+1}` per `(s, u)`.
    cost: Vec<f64>,
    /// Index of the state window `a(s)` and control window `b(s)`.
    a_of: Vec<usize>,
    b_of: Vec<usize>,
    na: usize,
    nb: usize,
}

impl LastStage {
    fn new(mdp: &FiniteMdp, t: usize, m: Degree, n: Degree) -> Result<Self> {
        let layout = HistoryPolicy::prefix_layout(mdp, t, DEFAULT_CELL_BUDGET)?;
        let (ka, kb) = (m.span(t) + 1, n.span(t));
        let a_layout = MixedRadix::new((t + 1 - ka..=t).map(|s| mdp.n_states(s)).collect());
        let b_layout = MixedRadix::new((t - kb..t).map(|s| mdp.n_actions(s)).collect());
        let (nx, nu) = (mdp.n_states(t), mdp.n_actions(t));
        let mut cost = Vec::with_capacity(layout.size() * nu);
        let mut a_of = Vec::with_capacity(layout.size());
        let mut b_of = Vec::with_capacity(layout.size());
        let mut digits = vec![0; layout.digits()];
        for s in 0..layout.size() {
            layout.decode_into(s, &mut digits);
            let x = s % nx;
            for u in 0..nu {
                let terminal: f64 = mdp.successors(t, x, u).iter().map(|&(xn, p)| p * mdp.terminal_cost()[xn]).sum();
                cost.push(mdp.cost(t, x, u) + terminal);
            }
            let a: Vec<usize> = (t + 1 - ka..=t).map(|r| digits[2 * r]).collect();
            let b: Vec<usize> = (t - kb..t).map(|r| digits[2 * r + 1]).collect();
            a_of.push(a_layout.encode(&a));
            b_of.push(b_layout.encode(&b));
        }
        Ok(LastStage { nu, cost, a_of, b_of, na: a_layout.size(), nb: b_layout.size() })
    }

    /// `(value, q, sweeps)` for prefix masses `p`.
    fn solve(&self, p: &[f64], beta: f64) -> (f64, Vec<f64>, usize) {
        let nu = self.nu;
        let mut q = vec![1.0 / nu as f64; p.len() * nu];
        let mut value = self.value(p, &q, beta);
        let mut step = 1.0;
        let mut trial = q.clone();
        let mut sweeps = 0;
        while sweeps < INNER_MAX_ITERS {
            sweeps += 1;
            let joint = self.joint(p, &q);
            let (p_ab, p_bu) = marginals(&joint, self.na, self.nb, nu);
            for (s, &ps) in p.iter().enumerate() {
                let row = &mut trial[s * nu..(s + 1) * nu];
                if ps == 0.0 {
                    row.copy_from_slice(&q[s * nu..(s + 1) * nu]);
                    continue;
                }
                let (a, b) = (self.a_of[s], self.b_of[s]);
                let mut max = f64::NEG_INFINITY;
                for u in 0..nu {
                    let cond = joint[(a * self.nb + b) * nu + u] / p_ab[a * self.nb + b];
                    let marg = p_bu[b * nu + u] / p_bu[b * nu..(b + 1) * nu].iter().sum::<f64>();
                    let grad = self.cost[s * nu + u] / beta + (cond / marg).ln();
                    let qu = q[s * nu + u];
                    let e = if qu > 0.0 { qu.ln() - step * grad } else { f64::NEG_INFINITY };
                    row[u] = e;
                    max = max.max(e);
                }
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                row.iter_mut().for_each(|v| *v /= sum);
            }
            let next = self.value(p, &trial, beta);
            if next > value + 1e-15 * value.abs().max(1.0) {
                step /= 2.0;
                if step < 1e-6 {
                    break;
                }
                continue;
            }
            std::mem::swap(&mut q, &mut trial);
            let done = value - next <= 1e-13 * value.abs().max(1.0);
            value = next;
            if done {
                break;
            }
        }
        (value, q, sweeps)
    }

    fn joint(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        let nu = self.nu;
        let mut joint = vec![0.0; self.na * self.nb * nu];
        for (s, &ps) in p.iter().enumerate() {
            if ps == 0.0 {
                continue;
            }
            let base = (self.a_of[s] * self.nb + self.b_of[s]) * nu;
            for u in 0..nu {
                joint[base + u] += ps * q[s * nu + u];
            }
        }
        joint
    }

    fn value(&self, p: &[f64], q: &[f64], beta: f64) -> f64 {
        let nu = self.nu;
        let cost: f64 = p
            .iter()
            .enumerate()
            .filter(|(_, &ps)| ps > 0.0)
            .map(|(s, &ps)| ps * (0..nu).map(|u| q[s * nu + u] * self.cost[s * nu + u]).sum::<f64>())
            .sum();
        cost + beta * conditional_mutual_information(&self.joint(p, q), self.na, self.nb, nu)
    }
}

fn marginals(joint: &[f64], na: usize, nb: usize, nu: usize) -> (Vec<f64>, Vec<f64>) {
    let mut p_ab = vec![0.0; na * nb];
    let mut p_bu = vec![0.0; nb * nu];
    for a in 0..na {
        for b in 0..nb {
            for u in 0..nu {
                let v = joint[(a * nb + b) * nu + u];
                p_ab[a * nb + b] += v;
                p_bu[b * nu + u] += v;
            }
        }
    }
    (p_ab, p_bu)
}

/// Outcome of comparing full-history and degree-`n` optima.
#[derive(Debug, Clone, Serialize)]
pub struct StructuralReport {
    pub degree: usize,
    pub full_history: f64,
    pub restricted: f64,
    /// `restricted - full_history`.
    pub gap: f64,
    pub tolerance: f64,
    pub agree: bool,
}

/// Checks that restricting to degree-`n` policies loses nothing for the
/// objective `J + beta * I_{0,n}` on a tiny instance.
pub fn structural_reduction_check(
    mdp: &FiniteMdp,
    beta: f64,
    degree: usize,
    resolution: f64,
    tolerance: f64,
) -> Result<StructuralReport> {
    let full = full_history_optimum(mdp, beta, Degree::Finite(0), Degree::Finite(degree), resolution)?;
    let restricted = brute_force_policy_search(mdp, beta, degree, resolution)?;
    let gap = restricted.value.total - full.value.total;
    Ok(StructuralReport {
        degree,
        full_history: full.value.total,
        restricted: restricted.value.total,
        gap,
        tolerance,
        agree: gap.abs() <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{build_hamming_channel, build_nonconvex_toy};
    use crate::solver::classical_blahut;

    #[test]
    fn hamming_matches_classical_value() {
        let mdp = build_hamming_channel();
        let b = brute_force_policy_search(&mdp, 1.0, 0, 1e-3).unwrap();
        let c = classical_blahut(&[0.5, 0.5], &[0.0, 1.0, 1.0, 0.0], 2, 1.0, 1e-14, 1000).unwrap();
        assert!((b.value.total - c.value).abs() < 1e-4, "{} vs {}", b.value.total, c.value);
    }

    #[test]
    fn zero_cost_is_free() {
        let mdp = FiniteMdp::stationary(2, 2, 2, vec![0.5; 8], vec![0.0; 4], vec![0.0; 2], vec![0.5, 0.5]).unwrap();
        let b = brute_force_policy_search(&mdp, 1.0, 0, 1e-2).unwrap();
        assert!(b.value.total.abs() < 1e-12);
    }

    #[test]
    fn guard_rejects_large_instances() {
        let mdp = FiniteMdp::stationary(4, 2, 2, vec![0.5; 8], vec![0.0; 4], vec![0.0; 2], vec![0.5, 0.5]).unwrap();
        assert!(matches!(brute_force_policy_search(&mdp, 1.0, 0, 1e-2), Err(Error::Resource(_))));
        assert!(brute_force_policy_search(&build_nonconvex_toy(), 1.0, 1, 1e-1).is_ok());
    }

    #[test]
    fn single_step_full_history_is_classical() {
        let mdp = build_hamming_channel();
        let h = full_history_optimum(&mdp, 1.0, Degree::Full, Degree::Full, 1e-3).unwrap();
        let star = -(0.5f64 * (1.0 + (-1.0f64).exp())).ln();
        assert!((h.value.total - star).abs() < 1e-10, "{}", h.value.total);
    }

    #[test]
    fn toy_classes_agree() {
        let r = structural_reduction_check(&build_nonconvex_toy(), 1.0, 0, 1e-2, 1e-3).unwrap();
        assert!(r.agree, "{r:?}");
    }

    #[test]
    fn full_history_mass_is_conserved() {
        let toy = build_nonconvex_toy();
        let h = full_history_optimum(&toy, 1.0, Degree::Full, Degree::Full, 1e-2).unwrap();
        let joint = trajectory_joint(&toy, &h.policy, DEFAULT_CELL_BUDGET).unwrap();
        for t in 0..=2 {
            assert!((joint.probs(t).iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
