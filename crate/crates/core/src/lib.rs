//! Energy storage cost minimization under price fluctuations and renewable
//! supply: the offline optimum, threshold-based online policies with
//! competitive guarantees, the one-shot demand decomposition used to analyse
//! them, and closed-form competitive-ratio machinery.

pub mod analysis;
pub mod decomposition;
pub mod error;
mod flow;
pub mod model;
pub mod offline;
pub mod online;

pub use analysis::{
    adversary_rho0, adversary_rho1, competitive_ratio, empirical_ratio, lemma1_bound, lemma1_f,
    lemma1_grid_max, lower_bound_rho0, lower_bound_rho1, rho0_minmax, rho0_ratio, rho0_response,
    Algorithm, FPoint, Ratio, RatioReport, Rho1Outcome, F_GRID_STEPS, Z_GRID_STEPS,
};
pub use decomposition::{
    accumulate, one_shot_decompose, run_decomposed_offline, run_decomposed_thb, truncate,
    Decomposition, DecompositionViolation, OneShotDemand,
};
pub use error::{EspError, Result};
pub use model::{
    compute_rho, effective_rho, schedule_cost, step_state, validate_schedule, Decision, MarketStats,
    Schedule, SlotInput, StorageSpec, Trace, ValidationReport, DEFAULT_TOL,
};
pub use offline::{brute_force_offline, solve_offline, solve_window, Fragment, WindowProblem};
pub use online::{
    lka_step, make_policy, run_lka, run_policy, run_rhc, run_thb, run_thb_adaptive,
    run_thb_adaptive_traced, thb_decision, thb_step, AdaptiveThb, NeverBuy, OnlinePolicy,
    OnlineState, ThresholdPolicy,
};
