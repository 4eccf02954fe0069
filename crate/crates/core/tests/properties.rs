use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use termdp::envs::{instance_to_json, parse_instance, random_instance, RandomSpec};
use termdp::model::{transfer_entropy_terms, Degree, FiniteMdp, MemoryPolicy, DEFAULT_CELL_BUDGET};
use termdp::oracle::finite_horizon_value_iteration;
use termdp::solver::{solve, SolveOptions};

fn instance(seed: u64) -> FiniteMdp {
    random_instance(RandomSpec::new(6, 4, 4), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn instances_round_trip_exactly(seed in any::<u64>()) {
        let mdp = instance(seed);
        prop_assert_eq!(parse_instance(&instance_to_json(&mdp).unwrap()).unwrap(), mdp);
    }

    #[test]
    fn solutions_are_distributions_reached_by_descent(seed in any::<u64>(), degree in 0usize..=2, beta in 0.1f64..10.0) {
        let mdp = instance(seed);
        let report = solve(&mdp, &SolveOptions::new(beta, degree).seeded(seed, 0.5)).unwrap();
        for (t, slice) in report.policy.slices().iter().enumerate() {
            for row in slice.chunks(mdp.n_actions(t)) {
                prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        for w in report.trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
        prop_assert!(report.value.information >= -1e-12);
    }

    #[test]
    fn information_price_never_beats_cost_only_optimum(seed in any::<u64>(), beta in 0.1f64..10.0) {
        let mdp = instance(seed);
        let report = solve(&mdp, &SolveOptions::new(beta, 0)).unwrap();
        let vi = finite_horizon_value_iteration(&mdp).optimal_cost;
        prop_assert!(report.value.expected_cost >= vi - 1e-9 * vi.abs().max(1.0));
        prop_assert!(report.value.total >= vi - 1e-9 * vi.abs().max(1.0));
    }

    #[test]
    fn transfer_entropy_terms_are_nonnegative(seed in any::<u64>(), degree in 0usize..=2) {
        let mdp = instance(seed);
        let policy = MemoryPolicy::random(&mdp, degree, &mut ChaCha8Rng::seed_from_u64(seed ^ 1)).unwrap();
        let terms = transfer_entropy_terms(&mdp, &policy, Degree::Finite(1), Degree::Finite(degree), DEFAULT_CELL_BUDGET).unwrap();
        prop_assert_eq!(terms.len(), mdp.horizon());
        prop_assert!(terms.iter().all(|&i| i >= -1e-12));
    }
}
