//! Finite TERMDP instances, memory policies, distribution propagation, and
//! the cost and information functionals.

pub mod belief;
pub mod history;
pub mod information;
pub mod mdp;
pub mod objective;
pub mod policy;

pub use belief::{induced_prior, propagate_reduced, ReducedBelief};
pub use history::{HistorySpace, MixedRadix, DEFAULT_CELL_BUDGET};
pub use information::{
    conditional_mutual_information, directed_information, directed_information_of, propagate_window, trajectory_joint,
    transfer_entropy, transfer_entropy_terms, window_joint, Degree, HistoryPolicy, TrajectoryJoint, WindowJoint,
};
pub use mdp::FiniteMdp;
pub use objective::{
    expected_cost, factored_objective, information_usage, objective, ObjectiveEvaluator, ObjectiveValue,
};
pub use policy::{ActionPrior, MemoryPolicy};
