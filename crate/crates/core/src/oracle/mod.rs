//! Independent reference computations: dynamic programming, exhaustive
//! policy search, landscapes of the two-step instance, rate bounds, and
//! seeded property suites.

pub mod brute;
pub mod dp;
pub mod grid;
pub mod landscape;
pub mod rates;
pub mod suites;

pub use brute::{
    brute_force_policy_search, full_history_optimum, structural_reduction_check, BruteForceResult, HistoryOptimum,
    StructuralReport,
};
pub use dp::{finite_horizon_value_iteration, ValueIteration};
pub use grid::{minimize_over_simplices, GridMinimum, COARSE_BUDGET, MAX_GRID_PARAMS};
pub use landscape::{
    bellman_landscape_stage2, objective_landscape_stage1, stage1_value, CellClass, LandscapeGrid, MIN_RESOLUTION,
};
pub use rates::{rate_bound_report, RateBoundReport, RateInput, RateRow};
pub use suites::{run_suite, run_suites, Suite, SuiteConfig, SuiteOutcome};

/// Formats a number with 12 significant digits.
pub fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}
