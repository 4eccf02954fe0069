use crate::error::{Error, Result};
use crate::model::FiniteMdp;

/// Mixed-radix index over a tuple of finite coordinates.
///
/// The first coordinate is the most significant digit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedRadix {
    cards: Vec<usize>,
    size: usize,
}

impl MixedRadix {
    pub fn new(cards: Vec<usize>) -> Self {
        let size = cards.iter().product();
        MixedRadix { cards, size }
    }

    /// Same as [`MixedRadix::new`] but fails with a resource error when the
    /// number of cells would exceed `limit` (or overflow).
    pub fn bounded(cards: Vec<usize>, limit: usize, what: &str) -> Result<Self> {
        let mut size: usize = 1;
        for &c in &cards {
            size = size
                .checked_mul(c)
                .filter(|&s| s <= limit)
                .ok_or_else(|| Error::resource(format!("{what} needs more than {limit} cells")))?;
        }
        Ok(MixedRadix { cards, size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn digits(&self) -> usize {
        self.cards.len()
    }

    pub fn encode(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.cards.len());
        digits.iter().zip(&self.cards).fold(0, |acc, (&d, &c)| acc * c + d)
    }

    pub fn decode_into(&self, mut index: usize, out: &mut [usize]) {
        for (slot, &c) in out.iter_mut().zip(&self.cards).rev() {
            *slot = index % c;
            index /= c;
        }
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0; self.cards.len()];
        self.decode_into(index, &mut out);
        out
    }
}

/// Default cap on the number of cells of any history or window array.
pub const DEFAULT_CELL_BUDGET: usize = 1 << 24;

/// Index space of the control histories `u_{t-n}^{t-1}` seen by a degree-`n`
/// policy.
///
/// At early times only the prefix `u_0^{t-1}` exists, so the history at time
/// `t` has `min(n, t)` coordinates (oldest first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistorySpace {
    degree: usize,
    layouts: Vec<MixedRadix>,
}

impl HistorySpace {
    /// Builds the space for decision times `0..horizon` plus the terminal
    /// time `horizon`.
    pub fn new(mdp: &FiniteMdp, degree: usize) -> Result<Self> {
        Self::with_budget(mdp, degree, DEFAULT_CELL_BUDGET)
    }

    pub fn with_budget(mdp: &FiniteMdp, degree: usize, budget: usize) -> Result<Self> {
        let horizon = mdp.horizon();
        let mut layouts = Vec::with_capacity(horizon + 1);
        for t in 0..=horizon {
            let h = degree.min(t);
            let cards = mdp.action_cards()[t - h..t].to_vec();
            let layout = MixedRadix::bounded(cards, budget, "control history")?;
            // every history-indexed array is at least |X_t| times larger
            if layout.size().saturating_mul(mdp.n_states(t)) > budget {
                return Err(Error::resource(format!("degree-{degree} reduced state at t={t} exceeds {budget} cells")));
            }
            layouts.push(layout);
        }
        Ok(HistorySpace { degree, layouts })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of distinct histories at time `t`.
    pub fn count(&self, t: usize) -> usize {
        self.layouts[t].size()
    }

    /// Number of controls in the history at time `t`.
    pub fn length(&self, t: usize) -> usize {
        self.layouts[t].digits()
    }

    pub fn layout(&self, t: usize) -> &MixedRadix {
        &self.layouts[t]
    }

    /// History index at `t + 1` after appending `u` (taken at time `t`) to
    /// history `hist` at time `t`.
    #[inline]
    pub fn successor(&self, t: usize, hist: usize, u: usize) -> usize {
        let cur = &self.layouts[t];
        let next = &self.layouts[t + 1];
        let nu = next.cards().last().copied().unwrap_or(1);
        if next.digits() == 0 {
            0
        } else if next.digits() == cur.digits() + 1 {
            hist * nu + u
        } else {
            // the window is full: drop the oldest control
            let keep = cur.size() / cur.cards()[0];
            (hist % keep) * nu + u
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_radix_roundtrip() {
        let r = MixedRadix::new(vec![2, 3, 4]);
        assert_eq!(r.size(), 24);
        for i in 0..24 {
            assert_eq!(r.encode(&r.decode(i)), i);
        }
        assert_eq!(r.encode(&[1, 2, 3]), 23);
        assert_eq!(MixedRadix::new(vec![]).size(), 1);
    }

    #[test]
    fn bounded_rejects_large() {
        assert!(matches!(MixedRadix::bounded(vec![1000, 1000, 1000], 1_000_000, "x"), Err(Error::Resource(_))));
    }

    #[test]
    fn successor_grows_then_slides() {
        // actions: 2, 3, 2, 2
        let mdp = FiniteMdp::new(
            4,
            vec![1; 5],
            vec![2, 3, 2, 2],
            vec![vec![1.0; 2], vec![1.0; 3], vec![1.0; 2], vec![1.0; 2]],
            vec![vec![0.0; 2], vec![0.0; 3], vec![0.0; 2], vec![0.0; 2]],
            vec![0.0],
            vec![1.0],
        )
        .unwrap();
        let hs = HistorySpace::new(&mdp, 2).unwrap();
        assert_eq!((0..=4).map(|t| hs.count(t)).collect::<Vec<_>>(), vec![1, 2, 6, 6, 4]);
        // t=0 -> t=1: () + u0=1 -> (1)
        assert_eq!(hs.successor(0, 0, 1), 1);
        // t=1 -> t=2: (1) + u1=2 -> (1,2) = 1*3+2
        assert_eq!(hs.successor(1, 1, 2), 5);
        // t=2 -> t=3: (1,2) + u2=1 -> (2,1) = 2*2+1
        assert_eq!(hs.successor(2, 5, 1), 5);
        // t=3 -> t=4: (2,1) + u3=0 -> (1,0) = 1*2+0
        assert_eq!(hs.successor(3, 5, 0), 2);

        let h0 = HistorySpace::new(&mdp, 0).unwrap();
        assert!((0..=4).all(|t| h0.count(t) == 1));
        assert_eq!(h0.successor(2, 0, 1), 0);
    }
}
