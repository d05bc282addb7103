//! Energy-efficient transmission scheduling under strict buffer underflow
//! constraints, cast as inventory-style dynamic programs.
//!
//! A single sender feeds one or more receiver playout buffers over a fading
//! channel with a shared per-slot power budget. Each slot the scheduler picks
//! how many (fluid) packets to send to each receiver so that no buffer drops
//! below one slot's demand, power stays within the peak, and expected
//! transmission-plus-holding cost is minimized over finite, discounted
//! infinite, and average-cost horizons.
//!
//! Modules:
//! - [`model`]: problem primitives, validation, effective power-rate curves.
//! - [`threshold`]: closed-form threshold tables and base-stock policies for
//!   a single receiver under IID channels.
//! - [`dp`]: exact grid dynamic programming for one and two receivers, plus
//!   convexity and supermodularity checkers.
//! - [`two_rx`]: the seven-region structured policy for two receivers.
//! - [`horizon`]: value iteration, limit targets, vanishing-discount average
//!   cost.
//! - [`bounds`]: separable and Lagrangian lower bounds for many receivers and
//!   the feasible greedy policy they induce.
//! - [`sim`]: reproducible Monte Carlo evaluation and exact path
//!   expectations.
//! - [`cache`]: binary persistence for solved grids.

pub mod bounds;
pub mod cache;
pub mod dp;
pub mod horizon;
pub mod model;
pub mod sim;
pub mod threshold;
pub mod two_rx;

pub use bounds::{greedy_feasible, lagrangian_bound, separable_bound, BoundKind, BoundReport};
pub use dp::{
    check_convexity_1rx, check_convexity_2rx, check_supermodularity, solve_1rx, solve_2rx,
    DpError, GreedyPolicy1, Grid1D, Grid2D, SolveOptions, ValueGrid1, ValueGrid2,
};
pub use horizon::{
    estimate_rho, evaluate_stationary_1rx, value_iterate_1rx, value_iterate_2rx,
    AverageCostEstimate, HorizonError, InfiniteSolution1, InfiniteSolution2,
};
pub use model::{
    validate, ChannelConfig, ChannelState, EffectiveCurve, HoldingCost, ModelError,
    PowerRateCurve, ProblemSpec, ReceiverSpec, ValidatedSpec,
};
pub use sim::{
    exhaustive_value, simulate, simulate_trajectory, CostStats, CounterRng, JustInTime,
    OpportunisticGreedy, Policy, SimConfig, SimError, Trajectory,
};
pub use threshold::{
    compute_gamma_linear, compute_gamma_pwl, criticals_from_gamma, policy_value, BaseStockPolicy,
    BaseStockSimPolicy, CriticalNumbers, ExtReal, ThresholdError, ThresholdTable,
};
pub use two_rx::{build_region_policy, RegionLabel, RegionPolicy, StructuredPolicy};
