use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FiniteMdp, HistorySpace};

/// Tolerance on the row sums of policy and prior slices.
pub const SLICE_SUM_TOL: f64 = 1e-12;

/// A randomized policy `q_t(u_t | x_t, u_{t-n}^{t-1})` of memory degree `n`.
///
/// `slices[t]` is row-major over `(history, x_t, u_t)`, with histories
/// indexed by [`HistorySpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryPolicy {
    degree: usize,
    slices: Vec<Vec<f64>>,
}

impl MemoryPolicy {
    /// Validates shape and normalization against `mdp`.
    pub fn new(mdp: &FiniteMdp, degree: usize, slices: Vec<Vec<f64>>) -> Result<Self> {
        let policy = MemoryPolicy { degree, slices };
        policy.validate(mdp)?;
        Ok(policy)
    }

    pub(crate) fn from_raw(degree: usize, slices: Vec<Vec<f64>>) -> Self {
        MemoryPolicy { degree, slices }
    }

    /// Checks the policy against an instance: slice shapes and that every
    /// conditional row is a distribution.
    pub fn validate(&self, mdp: &FiniteMdp) -> Result<()> {
        let space = HistorySpace::new(mdp, self.degree)?;
        if self.slices.len() != mdp.horizon() {
            return Err(Error::instance(format!(
                "policy has {} time slices, instance horizon is {}",
                self.slices.len(),
                mdp.horizon()
            )));
        }
        for (t, slice) in self.slices.iter().enumerate() {
            let (nh, nx, nu) = (space.count(t), mdp.n_states(t), mdp.n_actions(t));
            if slice.len() != nh * nx * nu {
                return Err(Error::instance(format!(
                    "policy slice {t}: expected {nh}x{nx}x{nu} entries, got {}",
                    slice.len()
                )));
            }
            for (r, row) in slice.chunks_exact(nu).enumerate() {
                let s: f64 = row.iter().sum();
                if row.iter().any(|&v| !(v >= 0.0)) || (s - 1.0).abs() > SLICE_SUM_TOL {
                    return Err(Error::instance(format!(
                        "policy[t={t}][h={}][x={}] is not a distribution (sum {s})",
                        r / nx,
                        r % nx
                    )));
                }
            }
        }
        Ok(())
    }

    /// Uniform action distribution everywhere.
    pub fn uniform(mdp: &FiniteMdp, degree: usize) -> Result<Self> {
        Self::from_fn(mdp, degree, |t, _, _, row| row.fill(1.0 / mdp.n_actions(t) as f64))
    }

    /// Builds a policy by filling each row `q_t(. | x, h)` with `fill(t, h, x, row)`.
    /// Rows are renormalized afterwards.
    pub fn from_fn<F>(mdp: &FiniteMdp, degree: usize, mut fill: F) -> Result<Self>
    where
        F: FnMut(usize, usize, usize, &mut [f64]),
    {
        let space = HistorySpace::new(mdp, degree)?;
        let mut slices = Vec::with_capacity(mdp.horizon());
        for t in 0..mdp.horizon() {
            let (nx, nu) = (mdp.n_states(t), mdp.n_actions(t));
            let mut slice = vec![0.0; space.count(t) * nx * nu];
            for (r, row) in slice.chunks_exact_mut(nu).enumerate() {
                fill(t, r / nx, r % nx, row);
                normalize(row)
                    .map_err(|_| Error::invalid(format!("policy row t={t} h={} x={} has no mass", r / nx, r % nx)))?;
            }
            slices.push(slice);
        }
        Self::new(mdp, degree, slices)
    }

    /// Uniform policy multiplied entrywise by `1 + magnitude * (2r - 1)`,
    /// `r ~ U[0,1)`, then renormalized. Strictly positive for
    /// `magnitude < 1`.
    pub fn perturbed_uniform<R: Rng>(mdp: &FiniteMdp, degree: usize, magnitude: f64, rng: &mut R) -> Result<Self> {
        if !(magnitude > 0.0 && magnitude < 1.0) {
            return Err(Error::invalid(format!("perturbation magnitude must lie in (0,1), got {magnitude}")));
        }
        Self::from_fn(mdp, degree, |_, _, _, row| {
            for v in row.iter_mut() {
                *v = 1.0 + magnitude * (2.0 * rng.random::<f64>() - 1.0);
            }
        })
    }

    /// Rows drawn uniformly from the simplex (normalized exponentials).
    pub fn random<R: Rng>(mdp: &FiniteMdp, degree: usize, rng: &mut R) -> Result<Self> {
        Self::from_fn(mdp, degree, |_, _, _, row| {
            for v in row.iter_mut() {
                *v = -(1.0 - rng.random::<f64>()).ln();
            }
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn horizon(&self) -> usize {
        self.slices.len()
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }

    pub fn slice(&self, t: usize) -> &[f64] {
        &self.slices[t]
    }

    pub fn into_slices(self) -> Vec<Vec<f64>> {
        self.slices
    }

    /// The row `q_t(. | x, h)`.
    pub fn row(&self, mdp: &FiniteMdp, t: usize, hist: usize, x: usize) -> &[f64] {
        let (nx, nu) = (mdp.n_states(t), mdp.n_actions(t));
        let start = (hist * nx + x) * nu;
        &self.slices[t][start..start + nu]
    }

    pub fn prob(&self, mdp: &FiniteMdp, t: usize, hist: usize, x: usize, u: usize) -> f64 {
        self.row(mdp, t, hist, x)[u]
    }
}

/// Per-history action distributions `nu_t(u_t | u_{t-n}^{t-1})`.
///
/// `slices[t]` is row-major over `(history, u_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPrior {
    degree: usize,
    slices: Vec<Vec<f64>>,
}

impl ActionPrior {
    pub fn new(mdp: &FiniteMdp, degree: usize, slices: Vec<Vec<f64>>) -> Result<Self> {
        let prior = ActionPrior { degree, slices };
        prior.validate(mdp)?;
        Ok(prior)
    }

    pub(crate) fn from_raw(degree: usize, slices: Vec<Vec<f64>>) -> Self {
        ActionPrior { degree, slices }
    }

    pub fn validate(&self, mdp: &FiniteMdp) -> Result<()> {
        let space = HistorySpace::new(mdp, self.degree)?;
        if self.slices.len() != mdp.horizon() {
            return Err(Error::instance(format!(
                "prior has {} time slices, instance horizon is {}",
                self.slices.len(),
                mdp.horizon()
            )));
        }
        for (t, slice) in self.slices.iter().enumerate() {
            let (nh, nu) = (space.count(t), mdp.n_actions(t));
            if slice.len() != nh * nu {
                return Err(Error::instance(format!(
                    "prior slice {t}: expected {nh}x{nu} entries, got {}",
                    slice.len()
                )));
            }
            for (h, row) in slice.chunks_exact(nu).enumerate() {
                let s: f64 = row.iter().sum();
                if row.iter().any(|&v| !(v >= 0.0)) || (s - 1.0).abs() > SLICE_SUM_TOL {
                    return Err(Error::instance(format!("prior[t={t}][h={h}] is not a distribution (sum {s})")));
                }
            }
        }
        Ok(())
    }

    pub fn uniform(mdp: &FiniteMdp, degree: usize) -> Result<Self> {
        let space = HistorySpace::new(mdp, degree)?;
        let slices = (0..mdp.horizon())
            .map(|t| vec![1.0 / mdp.n_actions(t) as f64; space.count(t) * mdp.n_actions(t)])
            .collect();
        Ok(ActionPrior { degree, slices })
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

    pub fn row(&self, mdp: &FiniteMdp, t: usize, hist: usize) -> &[f64] {
        let nu = mdp.n_actions(t);
        &self.slices[t][hist * nu..(hist + 1) * nu]
    }
}

/// Scales `row` to sum to one. Fails if the row has no positive mass.
pub(crate) fn normalize(row: &mut [f64]) -> std::result::Result<(), ()> {
    let s: f64 = row.iter().sum();
    if !(s > 0.0) || !s.is_finite() {
        return Err(());
    }
    row.iter_mut().for_each(|v| *v /= s);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mdp() -> FiniteMdp {
        FiniteMdp::stationary(3, 2, 3, vec![0.5; 12], vec![0.0; 6], vec![0.0; 2], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn shapes_follow_history_growth() {
        let m = mdp();
        let q = MemoryPolicy::uniform(&m, 2).unwrap();
        let lens: Vec<usize> = q.slices().iter().map(Vec::len).collect();
        assert_eq!(lens, vec![6, 18, 54]);
        assert!((q.prob(&m, 2, 7, 1, 2) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perturbed_is_positive_and_seeded() {
        let m = mdp();
        let a = MemoryPolicy::perturbed_uniform(&m, 1, 0.5, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = MemoryPolicy::perturbed_uniform(&m, 1, 0.5, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        assert!(a.slices().iter().flatten().all(|&v| v > 0.0));
        assert!(MemoryPolicy::perturbed_uniform(&m, 1, 1.0, &mut ChaCha8Rng::seed_from_u64(7)).is_err());
    }

    #[test]
    fn rejects_unnormalized_rows() {
        let m = mdp();
        let mut slices = MemoryPolicy::uniform(&m, 0).unwrap().into_slices();
        slices[1][4] += 1e-9;
        let err = MemoryPolicy::new(&m, 0, slices).unwrap_err().to_string();
        assert!(err.contains("t=1") && err.contains("x=1"), "{err}");
    }
}
