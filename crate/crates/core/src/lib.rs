//! Deferral scheduling for slotted service systems.
//!
//! One request of size psi arrives per slot with probability `p`. Serving a
//! load of `s` units in one slot costs `s^2`, a request may spread itself
//! over at most two consecutive slots, and touching a request twice incurs
//! a flat waiting charge `d`. The toolkit answers two questions about this
//! system and lets you check the answers:
//!
//! - **What should a planner do?** [`optimal`] builds the socially optimal
//!   deferral policy from a two-term coefficient recursion, classifies the
//!   parameter space into its defer-everywhere / never-defer-on-path
//!   regimes, and extends the rule to mixed request sizes.
//! - **What will selfish requests do?** [`nash`] computes the symmetric
//!   equilibrium strategy, its no-defer threshold, and exact best responses
//!   for certifying equilibria.
//! - **Do the formulas survive contact with brute force?** [`oracle`] redoes
//!   both computations by grid dynamic programming with no knowledge of the
//!   closed forms, and [`sim`] measures realized costs, renewal spacings,
//!   and pending-level distributions by Monte Carlo.
//!
//! Policies are shared through [`policy::PiecewisePolicy`] (exact segment
//! descriptions) and the [`policy::DeferralPolicy`] trait (anything the
//! simulator can drive).

pub mod model;
pub mod nash;
pub mod optimal;
pub mod oracle;
pub mod policy;
pub mod sim;

pub use model::{DemandClass, GeneralDemandTable, ModelError, ModelParams, SequencePair};
pub use nash::{
    agent_cost, best_response, best_response_policy, deviation_cost, equilibrium_limits,
    equilibrium_policy, NashEquilibrium, NashError, NashLimits,
};
pub use optimal::{
    approximate_policy, continuation_coefficients, continuation_limits, deferral_threshold,
    general_demand_policies, optimal_policy, stage_deferral, OptimalPolicy, Regime,
};
pub use oracle::{
    bellman_residual, jump_epochs, k_stage, nash_value_iteration, policy_value,
    table_best_response, value_iteration, Grid, OracleError, TablePolicy, TabularSolution,
};
pub use policy::{DeferralPolicy, PiecewisePolicy, PolicyError, Segment, SegmentKind};
pub use sim::{
    average_cost_sweep, pending_distribution, price_of_anarchy, simulate, simulate_with,
    PoaPoint, PolicyMode, SimConfig, SimError, SimulationReport, SweepPoint, WaitChargeRule,
};
