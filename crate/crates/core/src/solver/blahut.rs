use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::objective::check_beta;
use crate::solver::passes::log_sum_exp;

/// Result of the single-stage rate-distortion iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlahutSolution {
    /// `q(u | x)`, row-major over `(x, u)`.
    pub policy: Vec<f64>,
    /// The action marginal the last policy update was computed from.
    pub marginal: Vec<f64>,
    /// `-beta * sum_x p(x) log phi(x)`.
    pub value: f64,
    pub expected_cost: f64,
    /// `I(X; U)` of `policy` in nats.
    pub information: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Classical Arimoto-Blahut for `min E c + beta I(X; U)`, alternating
/// `nu(u) = sum_x p(x) q(u|x)` and `q(u|x) ∝ nu(u) exp(-c(x,u) / beta)` from
/// the uniform policy until the marginal moves less than `tol` in sup-norm.
pub fn classical_blahut(
    prior: &[f64],
    cost: &[f64],
    n_actions: usize,
    beta: f64,
    tol: f64,
    max_iters: usize,
) -> Result<BlahutSolution> {
    check_beta(beta)?;
    let nx = prior.len();
    if n_actions == 0 || cost.len() != nx * n_actions {
        return Err(Error::instance(format!("cost has {} entries, expected {nx}x{n_actions}", cost.len())));
    }
    let s: f64 = prior.iter().sum();
    if prior.iter().any(|&p| !(p >= 0.0)) || (s - 1.0).abs() > 1e-12 {
        return Err(Error::instance(format!("prior is not a distribution (sum {s})")));
    }
    if let Some(i) = cost.iter().position(|c| !c.is_finite()) {
        return Err(Error::instance(format!("cost[x={}][u={}] is not finite", i / n_actions, i % n_actions)));
    }
    if !(tol > 0.0) || max_iters == 0 {
        return Err(Error::invalid("tolerance must be positive and max_iters at least 1"));
    }

    let mut q = vec![1.0 / n_actions as f64; nx * n_actions];
    let mut nu = marginal(prior, &q, n_actions);
    let mut log_phi = vec![0.0; nx];
    let mut exponents = vec![0.0; n_actions];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        for x in 0..nx {
            for u in 0..n_actions {
                exponents[u] = nu[u].ln() - cost[x * n_actions + u] / beta;
            }
            let lse = log_sum_exp(&exponents);
            log_phi[x] = lse;
            for u in 0..n_actions {
                q[x * n_actions + u] = (exponents[u] - lse).exp();
            }
        }
        let next = marginal(prior, &q, n_actions);
        let delta = next.iter().zip(&nu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if delta < tol {
            converged = true;
            break;
        }
        nu = next;
    }

    let value = -beta * prior.iter().zip(&log_phi).filter(|(&p, _)| p > 0.0).map(|(p, l)| p * l).sum::<f64>();
    let (expected_cost, information) = cost_and_information(prior, cost, &q, n_actions);
    Ok(BlahutSolution { policy: q, marginal: nu, value, expected_cost, information, iterations, converged })
}

fn marginal(prior: &[f64], q: &[f64], n_actions: usize) -> Vec<f64> {
    let mut nu = vec![0.0; n_actions];
    for (row, &p) in q.chunks_exact(n_actions).zip(prior) {
        for (n, &v) in nu.iter_mut().zip(row) {
            *n += p * v;
        }
    }
    nu
}

/// `(E c, I(X; U))` of a single-stage policy.
pub fn cost_and_information(prior: &[f64], cost: &[f64], q: &[f64], n_actions: usize) -> (f64, f64) {
    let nu = marginal(prior, q, n_actions);
    let (mut c, mut i) = (0.0, 0.0);
    for (x, &p) in prior.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for u in 0..n_actions {
            let v = q[x * n_actions + u];
            if v > 0.0 {
                c += p * v * cost[x * n_actions + u];
                i += p * v * (v / nu[u]).ln();
            }
        }
    }
    (c, i.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HAMMING: [f64; 4] = [0.0, 1.0, 1.0, 0.0];

    #[test]
    fn zero_cost_uses_no_information() {
        let s = classical_blahut(&[0.3, 0.7], &[0.0; 6], 3, 1.0, 1e-14, 100).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.information, 0.0);
        assert_eq!(&s.policy[..3], &s.policy[3..]);
    }

    #[test]
    fn hamming_matches_closed_form() {
        let s = classical_blahut(&[0.5, 0.5], &HAMMING, 2, 1.0, 1e-14, 100).unwrap();
        let star = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((s.policy[0] - star).abs() < 1e-12);
        assert!((s.policy[3] - star).abs() < 1e-12);
        assert!((s.value - (s.expected_cost + s.information)).abs() < 1e-12);
    }

    #[test]
    fn symmetric_family_tracks_beta() {
        for beta in [0.05, 0.3, 2.0, 100.0] {
            let s = classical_blahut(&[0.5, 0.5], &HAMMING, 2, beta, 1e-14, 1000).unwrap();
            let star = 1.0 / (1.0 + (-1.0 / beta).exp());
            assert!((s.policy[0] - star).abs() < 1e-12, "beta {beta}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(classical_blahut(&[0.5, 0.4], &HAMMING, 2, 1.0, 1e-9, 10).is_err());
        assert!(classical_blahut(&[0.5, 0.5], &HAMMING, 2, 0.0, 1e-9, 10).is_err());
        assert!(classical_blahut(&[0.5, 0.5], &HAMMING[..3], 2, 1.0, 1e-9, 10).is_err());
    }
}
