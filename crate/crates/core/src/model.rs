//! Game instance, expected one-step rewards, and the AoI transition kernel.
//!
//! The state is the Age of Information `δ ∈ {0, …, delta_max − 1}`; the action
//! is a per-source transmission probability on a uniform grid. Everything
//! downstream (solver, analysis, simulation) consumes only this vocabulary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default discount factor for experiments.
pub const DEFAULT_DISCOUNT: f64 = 0.99;
/// Default state-space truncation for experiments.
pub const DEFAULT_DELTA_MAX: usize = 1000;
/// Default action-grid resolution (step 0.004).
pub const DEFAULT_GRID_SIZE: usize = 251;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("state {state} out of range (delta_max {delta_max})")]
    StateOutOfRange { state: usize, delta_max: usize },
    #[error("action {action} outside [0, 1]")]
    ActionOutOfRange { action: f64 },
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("policy length {len} does not match delta_max {delta_max}")]
    PolicyLengthMismatch { len: usize, delta_max: usize },
}

/// Which objective the sources optimize, and with it the transition exponent.
///
/// `Centralized` coordinates the sources into an equivalent single-source
/// system, so both its reward and its kernel use exponent 1. The exponent and
/// the reward are tied together here so they can never disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RewardKind {
    /// Each source minimizes the system AoI plus its own transmission cost.
    Selfish,
    /// Each source minimizes the system AoI plus the system-wide cost.
    Global,
    /// A single coordinated source; benchmark upper bound.
    Centralized,
}

impl RewardKind {
    pub const ALL: [RewardKind; 3] = [RewardKind::Selfish, RewardKind::Global, RewardKind::Centralized];

    /// True for the two distributed kinds (the indicator that scales the
    /// system-wide cost and silence exponent in the long-run metrics).
    pub fn is_distributed(self) -> bool {
        !matches!(self, RewardKind::Centralized)
    }

    /// Number of sources that actually draw a transmission each slot:
    /// `N` for distributed kinds, 1 for the centralized system.
    pub fn effective_sources(self, n_sources: u32) -> u32 {
        if self.is_distributed() {
            n_sources
        } else {
            1
        }
    }

    /// Cost coefficient of the one-step reward: the selfish objective pays the
    /// individual cost `c`, the global one the system cost `N·c`.
    pub fn reward_cost_coeff(self, params: &ModelParams) -> f64 {
        match self {
            RewardKind::Selfish | RewardKind::Centralized => params.cost,
            RewardKind::Global => params.n_sources as f64 * params.cost,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RewardKind::Selfish => "selfish",
            RewardKind::Global => "global",
            RewardKind::Centralized => "centralized",
        }
    }

    pub fn parse(s: &str) -> Option<RewardKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "selfish" => Some(RewardKind::Selfish),
            "global" => Some(RewardKind::Global),
            "centralized" => Some(RewardKind::Centralized),
            _ => None,
        }
    }
}

impl std::fmt::Display for RewardKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// The game instance: `N` sources, transmission cost `c`, discount `γ`,
/// state truncation `δ_max`, and the action-grid resolution `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_sources: u32,
    pub cost: f64,
    pub discount: f64,
    pub delta_max: usize,
    pub grid_size: usize,
}

impl ModelParams {
    pub fn new(n_sources: u32, cost: f64, discount: f64, delta_max: usize, grid_size: usize) -> Self {
        Self { n_sources, cost, discount, delta_max, grid_size }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_sources == 0 {
            return Err(ModelError::InvalidParams("n_sources must be positive".into()));
        }
        if !self.cost.is_finite() || self.cost < 0.0 {
            return Err(ModelError::InvalidParams(format!("cost {} must be finite and >= 0", self.cost)));
        }
        if !self.discount.is_finite() || !(0.0..1.0).contains(&self.discount) {
            return Err(ModelError::InvalidParams(format!(
                "discount {} must lie in [0, 1)",
                self.discount
            )));
        }
        if self.delta_max < 2 {
            return Err(ModelError::InvalidParams(format!("delta_max {} must be >= 2", self.delta_max)));
        }
        if self.grid_size < 2 {
            return Err(ModelError::InvalidParams(format!("grid_size {} must be >= 2", self.grid_size)));
        }
        Ok(())
    }

    pub fn action_grid(&self) -> Result<ActionGrid, ModelError> {
        ActionGrid::new(self.grid_size)
    }

    /// Compact identifier binding derived artifacts (policies, records) to the
    /// parameters that produced them.
    pub fn fingerprint(&self) -> String {
        format!(
            "N{} c{} g{} d{} k{}",
            self.n_sources, self.cost, self.discount, self.delta_max, self.grid_size
        )
    }

    /// Index of the state the chain advances to when nobody transmits.
    /// The truncation boundary self-loops.
    pub fn advance_target(&self, state: usize) -> usize {
        if state + 1 < self.delta_max {
            state + 1
        } else {
            self.delta_max - 1
        }
    }

    fn check_state(&self, state: usize) -> Result<(), ModelError> {
        if state >= self.delta_max {
            return Err(ModelError::StateOutOfRange { state, delta_max: self.delta_max });
        }
        Ok(())
    }
}

fn check_action(action: f64) -> Result<(), ModelError> {
    if !(action >= 0.0 && action <= 1.0) {
        return Err(ModelError::ActionOutOfRange { action });
    }
    Ok(())
}

/// Uniform grid of admissible transmission probabilities `{0, Δ, …, 1}`.
///
/// Values are generated once and reused everywhere, so policy entries compare
/// exactly without re-derivation drift. `values[j] = j / (k − 1)` makes the
/// endpoints exactly 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    values: Vec<f64>,
}

impl ActionGrid {
    pub fn new(grid_size: usize) -> Result<Self, ModelError> {
        if grid_size < 2 {
            return Err(ModelError::InvalidParams(format!("grid_size {grid_size} must be >= 2")));
        }
        let denom = (grid_size - 1) as f64;
        let values = (0..grid_size).map(|j| j as f64 / denom).collect();
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> f64 {
        1.0 / (self.values.len() - 1) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }
}

/// Per-state transmission probabilities, tagged with the objective that
/// produced them and the parameter fingerprint they are bound to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub probs: Vec<f64>,
    pub kind: RewardKind,
    pub params_fingerprint: String,
}

impl Policy {
    /// Wraps externally supplied probabilities; entries must lie in `[0, 1]`
    /// (they need not fall on the action grid).
    pub fn new(probs: Vec<f64>, kind: RewardKind, params: &ModelParams) -> Result<Self, ModelError> {
        if probs.len() != params.delta_max {
            return Err(ModelError::PolicyLengthMismatch { len: probs.len(), delta_max: params.delta_max });
        }
        for &p in &probs {
            check_action(p)?;
        }
        Ok(Self { probs, kind, params_fingerprint: params.fingerprint() })
    }

    /// Same probability in every state.
    pub fn uniform(p: f64, kind: RewardKind, params: &ModelParams) -> Result<Self, ModelError> {
        Self::new(vec![p; params.delta_max], kind, params)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// σ_i = 1 − p_i, the probability that one source stays silent in state i.
    pub fn silence(&self, state: usize) -> f64 {
        1.0 - self.probs[state]
    }
}

/// Expected one-step reward from `state` under `action`.
///
/// Selfish:      −(i+1)(1−a)^N − c·a
/// Centralized:  −(i+1)(1−a)   − c·a
/// Global:       −(i+1)(1−a)^N − N·c·a
pub fn expected_reward(
    kind: RewardKind,
    state: usize,
    action: f64,
    params: &ModelParams,
) -> Result<f64, ModelError> {
    params.check_state(state)?;
    check_action(action)?;
    let age = (state + 1) as f64;
    let silence = (1.0 - action).powi(kind.effective_sources(params.n_sources) as i32);
    Ok(-age * silence - kind.reward_cost_coeff(params) * action)
}

/// Distribution over next states: reset to 0 when at least one source
/// transmits, otherwise advance by one (self-loop at the truncation boundary).
/// Zero-probability support points are omitted.
pub fn transition_distribution(
    state: usize,
    action: f64,
    kind: RewardKind,
    params: &ModelParams,
) -> Result<Vec<(usize, f64)>, ModelError> {
    params.check_state(state)?;
    check_action(action)?;
    let silence = (1.0 - action).powi(kind.effective_sources(params.n_sources) as i32);
    let reset = 1.0 - silence;
    let mut support = Vec::with_capacity(2);
    if reset > 0.0 {
        support.push((0, reset));
    }
    if silence > 0.0 {
        support.push((params.advance_target(state), silence));
    }
    Ok(support)
}
