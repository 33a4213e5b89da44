//! Solver and analysis toolkit for a multi-source Age-of-Information
//! updating game.
//!
//! `N` sources watch a common process and may push status updates to a sink;
//! any update resets the sink's Age of Information to zero, while every
//! transmission costs `c`. Sources pick a state-dependent transmission
//! probability, and three objectives are compared: a distributed selfish one,
//! a distributed global one, and a centralized single-source benchmark.
//!
//! The crate computes optimal state-dependent policies by discounted value
//! iteration ([`solver`]), derives exact long-run metrics from the induced
//! Markov chain and verifies the structural properties of the solutions
//! ([`analysis`]), cross-checks everything against a slot-level Monte-Carlo
//! simulator ([`montecarlo`]), and drives parameter sweeps, file output, and
//! verification suites ([`harness`]).

pub mod analysis;
pub mod harness;
pub mod model;
pub mod montecarlo;
pub mod solver;

pub use analysis::{
    centralized_threshold, chain_metrics, extract_threshold, stationary_distribution,
    update_probabilities, verify_implicit_equation, verify_monotonicity, verify_theorem2,
    AnalysisError, ChainStats, PolicyShape, TheoryCheckResult, ThresholdReport,
};
pub use model::{
    expected_reward, transition_distribution, ActionGrid, ModelError, ModelParams, Policy,
    RewardKind, DEFAULT_DELTA_MAX, DEFAULT_DISCOUNT, DEFAULT_GRID_SIZE,
};
pub use montecarlo::{simulate, simulate_with_frequencies, SimConfig, SimError, SimEstimate};
pub use solver::{
    best_response, ne_residual, policy_value, value_iteration, SolveConfig, TieBreak,
    ValueFunction,
};
