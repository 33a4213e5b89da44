//! Discounted value iteration, fixed-policy evaluation, and the
//! best-response operator with its Nash-residual diagnostic.
//!
//! All solves are synchronous sweeps of the Bellman operator starting from the
//! all-zero value function, which keeps the iterates monotone (rewards are
//! non-positive) and the output bit-deterministic for given inputs.

use serde::{Deserialize, Serialize};

use crate::model::{ActionGrid, ModelError, ModelParams, Policy, RewardKind};

/// Absolute tolerance for action ties; the smallest action wins.
pub const TIE_BREAK_TOLERANCE: f64 = 1e-12;
/// Default sup-norm stopping threshold.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Default iteration cap.
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

/// Tie-breaking rule for the per-state argmax.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieBreak {
    /// Prefer the smallest action among values within [`TIE_BREAK_TOLERANCE`]
    /// of the maximum. Deterministic, and biased toward not transmitting.
    #[default]
    SmallestAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub tie_break: TieBreak,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tie_break: TieBreak::SmallestAction,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.tolerance > 0.0) {
            return Err(ModelError::InvalidParams(format!(
                "tolerance {} must be positive",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(ModelError::InvalidParams("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-state discounted value estimates together with convergence metadata.
///
/// Convergence is not an error: when the iteration cap is hit first,
/// `final_residual > tolerance` and the caller decides what to do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub values: Vec<f64>,
    pub iterations_run: usize,
    pub final_residual: f64,
}

impl ValueFunction {
    pub fn converged(&self, config: &SolveConfig) -> bool {
        self.final_residual < config.tolerance
    }
}

/// One-step backup coefficients shared by the solve loops.
///
/// For every admissible action the q-value has the affine form
/// `q = stay·(γ(v_next − v_0) − (i+1)) + γ·v_0 − act_cost`, where `stay` is
/// the probability that nobody transmits.
struct Kernel {
    delta_max: usize,
    gamma: f64,
    stay: Vec<f64>,
    act_cost: Vec<f64>,
}

impl Kernel {
    fn joint(params: &ModelParams, kind: RewardKind, grid: &ActionGrid) -> Self {
        let exponent = kind.effective_sources(params.n_sources) as i32;
        let cost_coeff = kind.reward_cost_coeff(params);
        let stay = grid.values().iter().map(|&a| (1.0 - a).powi(exponent)).collect();
        let act_cost = grid.values().iter().map(|&a| cost_coeff * a).collect();
        Self { delta_max: params.delta_max, gamma: params.discount, stay, act_cost }
    }

    /// One optimality sweep; returns the sup-norm change.
    fn sweep_max(&self, v: &[f64], out: &mut [f64]) -> f64 {
        let v0 = v[0];
        let base = self.gamma * v0;
        let mut residual = 0.0f64;
        for i in 0..self.delta_max {
            let next = if i + 1 < self.delta_max { i + 1 } else { self.delta_max - 1 };
            let slope = self.gamma * (v[next] - v0) - (i + 1) as f64;
            let mut best = f64::NEG_INFINITY;
            for (s, c) in self.stay.iter().zip(&self.act_cost) {
                let q = s * slope + base - c;
                if q > best {
                    best = q;
                }
            }
            residual = residual.max((best - v[i]).abs());
            out[i] = best;
        }
        residual
    }

    /// Greedy action indices w.r.t. `v`, smallest action winning ties.
    fn greedy(&self, v: &[f64]) -> Vec<usize> {
        let v0 = v[0];
        let base = self.gamma * v0;
        let mut actions = Vec::with_capacity(self.delta_max);
        for i in 0..self.delta_max {
            let next = if i + 1 < self.delta_max { i + 1 } else { self.delta_max - 1 };
            let slope = self.gamma * (v[next] - v0) - (i + 1) as f64;
            let q_at = |j: usize| self.stay[j] * slope + base - self.act_cost[j];
            let mut max_q = f64::NEG_INFINITY;
            for j in 0..self.stay.len() {
                max_q = max_q.max(q_at(j));
            }
            let chosen = (0..self.stay.len())
                .find(|&j| q_at(j) >= max_q - TIE_BREAK_TOLERANCE)
                .expect("grid is non-empty");
            actions.push(chosen);
        }
        actions
    }
}

fn iterate_to_fixpoint(
    kernel: &Kernel,
    config: &SolveConfig,
) -> (Vec<f64>, usize, f64) {
    let mut v = vec![0.0; kernel.delta_max];
    let mut next = vec![0.0; kernel.delta_max];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < config.max_iterations {
        residual = kernel.sweep_max(&v, &mut next);
        std::mem::swap(&mut v, &mut next);
        iterations += 1;
        if residual < config.tolerance {
            break;
        }
    }
    (v, iterations, residual)
}

/// Solves for the optimal symmetric policy with the Bellman optimality update
/// `v_{k+1}(i) = max_a [ R(i, a) + γ·Σ_j p(j | i, a)·v_k(j) ]` over the action
/// grid, then extracts the greedy policy from the converged values.
pub fn value_iteration(
    params: &ModelParams,
    kind: RewardKind,
    config: &SolveConfig,
) -> Result<(ValueFunction, Policy), ModelError> {
    params.validate()?;
    config.validate()?;
    let grid = params.action_grid()?;
    let kernel = Kernel::joint(params, kind, &grid);
    let (values, iterations_run, final_residual) = iterate_to_fixpoint(&kernel, config);
    let probs = kernel.greedy(&values).into_iter().map(|j| grid.value(j)).collect();
    let policy = Policy { probs, kind, params_fingerprint: params.fingerprint() };
    Ok((ValueFunction { values, iterations_run, final_residual }, policy))
}

/// Evaluates a fixed policy by iterating the Bellman expectation update to the
/// same stopping rule as [`value_iteration`]. The policy need not lie on the
/// action grid.
pub fn policy_value(
    params: &ModelParams,
    kind: RewardKind,
    policy: &Policy,
    config: &SolveConfig,
) -> Result<ValueFunction, ModelError> {
    params.validate()?;
    config.validate()?;
    if policy.len() != params.delta_max {
        return Err(ModelError::PolicyLengthMismatch { len: policy.len(), delta_max: params.delta_max });
    }
    let exponent = kind.effective_sources(params.n_sources) as i32;
    let cost_coeff = kind.reward_cost_coeff(params);
    let gamma = params.discount;
    let delta_max = params.delta_max;

    let stay: Vec<f64> = (0..delta_max).map(|i| policy.silence(i).powi(exponent)).collect();
    let reward: Vec<f64> = (0..delta_max)
        .map(|i| -((i + 1) as f64) * stay[i] - cost_coeff * policy.probs[i])
        .collect();

    let mut v = vec![0.0; delta_max];
    let mut next = vec![0.0; delta_max];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < config.max_iterations {
        let v0 = v[0];
        residual = 0.0;
        for i in 0..delta_max {
            let adv = if i + 1 < delta_max { i + 1 } else { delta_max - 1 };
            let value = reward[i] + gamma * (stay[i] * v[adv] + (1.0 - stay[i]) * v0);
            residual = residual.max((value - v[i]).abs());
            next[i] = value;
        }
        std::mem::swap(&mut v, &mut next);
        iterations += 1;
        if residual < config.tolerance {
            break;
        }
    }
    Ok(ValueFunction { values: v, iterations_run: iterations, final_residual: residual })
}

/// Optimal policy of a single source when the other `N − 1` sources are frozen
/// at `others`: one-step reward `−(i+1)(1−a)·σ̄_i^{N−1} − c·a` and advance
/// probability `(1−a)·σ̄_i^{N−1}`.
pub fn best_response(
    params: &ModelParams,
    others: &Policy,
    config: &SolveConfig,
) -> Result<Policy, ModelError> {
    params.validate()?;
    config.validate()?;
    if others.len() != params.delta_max {
        return Err(ModelError::PolicyLengthMismatch { len: others.len(), delta_max: params.delta_max });
    }
    let grid = params.action_grid()?;
    let gamma = params.discount;
    let delta_max = params.delta_max;
    let one_minus: Vec<f64> = grid.values().iter().map(|&a| 1.0 - a).collect();
    let act_cost: Vec<f64> = grid.values().iter().map(|&a| params.cost * a).collect();
    let exponent = params.n_sources as i32 - 1;
    let others_silence: Vec<f64> = (0..delta_max).map(|i| others.silence(i).powi(exponent)).collect();

    let q_tables = |v: &[f64], i: usize| -> (f64, f64) {
        let next = if i + 1 < delta_max { i + 1 } else { delta_max - 1 };
        let slope = others_silence[i] * (gamma * (v[next] - v[0]) - (i + 1) as f64);
        (slope, gamma * v[0])
    };

    let mut v = vec![0.0; delta_max];
    let mut next_v = vec![0.0; delta_max];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < config.max_iterations {
        residual = 0.0;
        for i in 0..delta_max {
            let (slope, base) = q_tables(&v, i);
            let mut best = f64::NEG_INFINITY;
            for (om, c) in one_minus.iter().zip(&act_cost) {
                let q = om * slope + base - c;
                if q > best {
                    best = q;
                }
            }
            residual = residual.max((best - v[i]).abs());
            next_v[i] = best;
        }
        std::mem::swap(&mut v, &mut next_v);
        iterations += 1;
        if residual < config.tolerance {
            break;
        }
    }

    let mut probs = Vec::with_capacity(delta_max);
    for i in 0..delta_max {
        let (slope, base) = q_tables(&v, i);
        let q_at = |j: usize| one_minus[j] * slope + base - act_cost[j];
        let mut max_q = f64::NEG_INFINITY;
        for j in 0..one_minus.len() {
            max_q = max_q.max(q_at(j));
        }
        let chosen = (0..one_minus.len())
            .find(|&j| q_at(j) >= max_q - TIE_BREAK_TOLERANCE)
            .expect("grid is non-empty");
        probs.push(grid.value(chosen));
    }
    Ok(Policy { probs, kind: RewardKind::Selfish, params_fingerprint: params.fingerprint() })
}

/// Sup-norm gap between `policy` and the best response to it; 0 means the
/// policy is an exact symmetric best-response fixed point on the grid.
pub fn ne_residual(params: &ModelParams, policy: &Policy, config: &SolveConfig) -> Result<f64, ModelError> {
    let reply = best_response(params, policy, config)?;
    Ok(reply
        .probs
        .iter()
        .zip(&policy.probs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// One Bellman optimality sweep of `values`; exposed for residual checks.
pub(crate) fn bellman_backup(
    params: &ModelParams,
    kind: RewardKind,
    values: &[f64],
) -> Result<Vec<f64>, ModelError> {
    params.validate()?;
    let grid = params.action_grid()?;
    let kernel = Kernel::joint(params, kind, &grid);
    let mut out = vec![0.0; params.delta_max];
    kernel.sweep_max(values, &mut out);
    Ok(out)
}
