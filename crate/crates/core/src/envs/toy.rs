use crate::model::FiniteMdp;

/// Two-step binary instance whose objective is nonconvex in the policy:
/// the next state copies the action, acting against the state costs 1,
/// the initial state is a fair coin and there is no terminal cost.
pub fn build_nonconvex_toy() -> FiniteMdp {
    FiniteMdp::stationary(
        2,
        2,
        2,
        vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0],
        vec![0.0, 1.0, 1.0, 0.0],
        vec![0.0, 0.0],
        vec![0.5, 0.5],
    )
    .expect("toy instance is valid")
}

/// One-step binary instance with Hamming cost and a uniform prior, the
/// classical rate-distortion special case.
pub fn build_hamming_channel() -> FiniteMdp {
    FiniteMdp::stationary(1, 2, 2, vec![0.5; 8], vec![0.0, 1.0, 1.0, 0.0], vec![0.0, 0.0], vec![0.5, 0.5])
        .expect("hamming instance is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_tables() {
        let toy = build_nonconvex_toy();
        assert_eq!(toy.horizon(), 2);
        assert_eq!(toy.prob(0, 0, 1, 1), 1.0);
        assert_eq!(toy.prob(0, 1, 1, 1), 1.0);
        assert_eq!(toy.cost(0, 0, 1), 1.0);
        assert_eq!(toy.cost(0, 1, 1), 0.0);
        assert_eq!(toy.initial(), &[0.5, 0.5]);
        assert_eq!(toy.terminal_cost(), &[0.0, 0.0]);
    }
}
