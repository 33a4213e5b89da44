//! Exact long-run behavior of a policy-induced chain and verification of the
//! structural properties of solved policies.
//!
//! The chain has a reset-to-zero structure (any update sends the AoI to 0,
//! otherwise it advances by one, self-looping at the truncation boundary), so
//! the stationary distribution comes out in closed form instead of needing a
//! general linear solve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ModelParams, Policy, RewardKind};
use crate::solver::{policy_value, value_iteration, SolveConfig};

/// Default saturation tolerance on the action scale for threshold extraction.
pub const DEFAULT_THRESHOLD_EPSILON: f64 = 1e-3;
/// States with stationary mass below this are ignored by the bounded-value
/// check, which is a statement about the recurrent class.
pub const STATIONARY_MASS_MIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("no stationary distribution: absorbing boundary")]
    AbsorbingBoundary,
    #[error("update probability {value} at state {state} outside [0, 1]")]
    InvalidUpdateProbability { state: usize, value: f64 },
    #[error("update-probability sequence is empty")]
    EmptyChain,
    #[error("epsilon {0} outside (0, 0.5)")]
    InvalidEpsilon(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Update probabilities, stationary distribution, and the four long-run
/// metrics of a policy-induced chain.
///
/// `avg_cost` uses the non-negative convention: it is the system-wide expected
/// cost per slot, and `avg_reward` subtracts it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub update_probs: Vec<f64>,
    pub stationary: Vec<f64>,
    pub avg_update: f64,
    pub avg_aoi: f64,
    pub avg_cost: f64,
    pub avg_reward: f64,
    /// Stationary mass at the truncation boundary; above ~1e-6 the truncation
    /// is too tight for the metrics to be trusted.
    pub boundary_mass: f64,
}

/// Shape of a solved policy on the action scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyShape {
    /// ε-binary with a single switch: silent below the threshold, certain
    /// transmission at and above it.
    HardThreshold { threshold: usize },
    /// Anything else; `first_saturated` is `None` when the policy never
    /// reaches 1 − ε.
    Smooth { first_nonzero: Option<usize>, first_saturated: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub shape: PolicyShape,
    pub epsilon: f64,
}

impl ThresholdReport {
    pub fn hard_threshold(&self) -> Option<usize> {
        match self.shape {
            PolicyShape::HardThreshold { threshold } => Some(threshold),
            PolicyShape::Smooth { .. } => None,
        }
    }
}

/// Outcome of one verification check; `passed` holds exactly when
/// `worst_violation <= tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryCheckResult {
    pub check_name: String,
    pub passed: bool,
    pub worst_violation: f64,
    pub tolerance: f64,
    pub details: String,
}

impl TheoryCheckResult {
    pub fn new(name: impl Into<String>, worst_violation: f64, tolerance: f64, details: String) -> Self {
        Self {
            check_name: name.into(),
            passed: worst_violation <= tolerance,
            worst_violation,
            tolerance,
            details,
        }
    }
}

/// Per-state probability that at least one source transmits:
/// `u_i = 1 − (1 − p_i)^N` for distributed kinds, `p_i` for the centralized
/// system.
pub fn update_probabilities(
    policy: &Policy,
    params: &ModelParams,
    kind: RewardKind,
) -> Result<Vec<f64>, AnalysisError> {
    if policy.len() != params.delta_max {
        return Err(ModelError::PolicyLengthMismatch { len: policy.len(), delta_max: params.delta_max }.into());
    }
    let exponent = kind.effective_sources(params.n_sources) as i32;
    Ok((0..policy.len()).map(|i| 1.0 - policy.silence(i).powi(exponent)).collect())
}

/// Stationary distribution of the reset-to-zero chain with a self-looping
/// boundary, given per-state update probabilities.
///
/// Unnormalized mass: `m_i = Π_{j<i}(1 − u_j)` for interior states and
/// `m_last = Π_{j<last}(1 − u_j) / u_last`; the return value is `m`
/// normalized. Errors when the boundary is absorbing but still reachable.
pub fn stationary_distribution(update_probs: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    if update_probs.is_empty() {
        return Err(AnalysisError::EmptyChain);
    }
    for (state, &u) in update_probs.iter().enumerate() {
        if !(u >= 0.0 && u <= 1.0) {
            return Err(AnalysisError::InvalidUpdateProbability { state, value: u });
        }
    }
    let len = update_probs.len();
    if len == 1 {
        return Ok(vec![1.0]);
    }
    let mut mass = Vec::with_capacity(len);
    let mut survival = 1.0f64; // Π_{j<i} (1 − u_j)
    for &u in &update_probs[..len - 1] {
        mass.push(survival);
        survival *= 1.0 - u;
    }
    let u_last = update_probs[len - 1];
    if survival > 0.0 && u_last == 0.0 {
        return Err(AnalysisError::AbsorbingBoundary);
    }
    mass.push(if survival > 0.0 { survival / u_last } else { 0.0 });
    let total: f64 = mass.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(AnalysisError::AbsorbingBoundary);
    }
    Ok(mass.into_iter().map(|m| m / total).collect())
}

/// Long-run metrics of the chain induced by `policy`:
/// `Ū = Σ π_i u_i`, `Δ̄ = Σ π_i i`, `C̄ = Σ π_i·[1+(N−1)𝟙_dist]·c·p_i` and
/// `R̄ = −Σ π_i (i+1)(1−p_i)^{1+(N−1)𝟙_dist} − C̄`.
pub fn chain_metrics(
    policy: &Policy,
    params: &ModelParams,
    kind: RewardKind,
) -> Result<ChainStats, AnalysisError> {
    let update_probs = update_probabilities(policy, params, kind)?;
    let stationary = stationary_distribution(&update_probs)?;
    let exponent = kind.effective_sources(params.n_sources);
    let cost_multiplier = exponent as f64;

    let mut avg_update = 0.0;
    let mut avg_aoi = 0.0;
    let mut avg_cost = 0.0;
    let mut age_term = 0.0;
    for i in 0..policy.len() {
        let pi = stationary[i];
        avg_update += pi * update_probs[i];
        avg_aoi += pi * i as f64;
        avg_cost += pi * cost_multiplier * params.cost * policy.probs[i];
        age_term += pi * (i + 1) as f64 * policy.silence(i).powi(exponent as i32);
    }
    let boundary_mass = stationary[policy.len() - 1];
    Ok(ChainStats {
        update_probs,
        stationary,
        avg_update,
        avg_aoi,
        avg_cost,
        avg_reward: -age_term - avg_cost,
        boundary_mass,
    })
}

/// Closed-form activation threshold of the centralized system in the
/// `γ → 1` regime: `max(0, ⌈√(2c) − 1⌉)`.
pub fn centralized_threshold(cost: f64) -> usize {
    debug_assert!(cost >= 0.0);
    let raw = ((2.0 * cost).sqrt() - 1.0).ceil();
    if raw > 0.0 {
        raw as usize
    } else {
        0
    }
}

/// Classifies a policy as a hard ε-threshold or a smooth ramp.
pub fn extract_threshold(policy: &Policy, epsilon: f64) -> Result<ThresholdReport, AnalysisError> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(AnalysisError::InvalidEpsilon(epsilon));
    }
    let probs = &policy.probs;
    let first_nonzero = probs.iter().position(|&p| p > epsilon);
    let first_saturated = probs.iter().position(|&p| p > 1.0 - epsilon);
    let shape = match first_saturated {
        Some(threshold)
            if probs[..threshold].iter().all(|&p| p < epsilon)
                && probs[threshold..].iter().all(|&p| p > 1.0 - epsilon) =>
        {
            PolicyShape::HardThreshold { threshold }
        }
        _ => PolicyShape::Smooth { first_nonzero, first_saturated },
    };
    Ok(ThresholdReport { shape, epsilon })
}

/// Checks that discounted costs grow at most linearly between recurrent
/// states: `K̄(s2) − K̄(s1) ≤ (s2 − s1) + 10(1−γ)δ_max` for all pairs with
/// stationary mass above [`STATIONARY_MASS_MIN`], where `K̄ = −v` comes from
/// evaluating the solved policy. The slack is unavoidable at any fixed γ < 1
/// since the underlying statement is a γ → 1 limit.
pub fn verify_theorem2(
    params: &ModelParams,
    kind: RewardKind,
    config: &SolveConfig,
) -> Result<TheoryCheckResult, AnalysisError> {
    let (_, policy) = value_iteration(params, kind, config)?;
    let values = policy_value(params, kind, &policy, config)?;
    let stats = chain_metrics(&policy, params, kind)?;

    let recurrent: Vec<usize> =
        (0..params.delta_max).filter(|&i| stats.stationary[i] > STATIONARY_MASS_MIN).collect();
    let cost_of = |i: usize| -values.values[i];

    let mut worst = f64::NEG_INFINITY;
    let mut worst_pair = (0, 0);
    for (idx, &s1) in recurrent.iter().enumerate() {
        for &s2 in &recurrent[idx + 1..] {
            let violation = cost_of(s2) - cost_of(s1) - (s2 - s1) as f64;
            if violation > worst {
                worst = violation;
                worst_pair = (s1, s2);
            }
        }
    }
    let tolerance = 10.0 * (1.0 - params.discount) * params.delta_max as f64;
    let details = format!(
        "kind={} gamma={} recurrent_states={} worst_pair=({}, {})",
        kind,
        params.discount,
        recurrent.len(),
        worst_pair.0,
        worst_pair.1
    );
    let worst = if recurrent.len() < 2 { 0.0 } else { worst };
    Ok(TheoryCheckResult::new("bounded_value_differences", worst, tolerance, details))
}

/// Verifies that the evaluated values satisfy the fixed-policy recursion at
/// every interior state (`0 < p_i < 1`):
///
/// `K̄(i) = κ·p_i + y_i(i+1) + γ[(1−y_i)K̄(0) + y_i K̄(i+1)]`,
///
/// with `σ_i = 1−p_i`, `y_i = σ_i^N`, `K̄ = −v`, and κ the kind's reward cost
/// coefficient. Passes when the residual is below `1e−6·(1+|K̄(i)|)` at every
/// interior state. The payload also reports how far `y_i` from the rearranged
/// line equation drifts from `σ_i^N`.
pub fn verify_implicit_equation(
    params: &ModelParams,
    kind: RewardKind,
    policy: &Policy,
    values: &crate::solver::ValueFunction,
) -> Result<TheoryCheckResult, AnalysisError> {
    if policy.len() != params.delta_max || values.values.len() != params.delta_max {
        return Err(ModelError::PolicyLengthMismatch {
            len: policy.len().min(values.values.len()),
            delta_max: params.delta_max,
        }
        .into());
    }
    let exponent = kind.effective_sources(params.n_sources) as i32;
    let cost_coeff = kind.reward_cost_coeff(params);
    let gamma = params.discount;
    let cost_of = |i: usize| -values.values[i];

    let mut worst_rel = 0.0f64;
    let mut worst_state = None;
    let mut worst_line_gap = 0.0f64;
    let mut interior = 0usize;
    for i in 0..params.delta_max {
        let p = policy.probs[i];
        if !(p > 0.0 && p < 1.0) {
            continue;
        }
        interior += 1;
        let sigma = 1.0 - p;
        let y = sigma.powi(exponent);
        let age = (i + 1) as f64;
        let k_i = cost_of(i);
        let k_next = cost_of(params.advance_target(i));
        let k_0 = cost_of(0);
        let rhs = cost_coeff * p + y * age + gamma * ((1.0 - y) * k_0 + y * k_next);
        let rel = (k_i - rhs).abs() / (1.0 + k_i.abs());
        if rel > worst_rel {
            worst_rel = rel;
            worst_state = Some(i);
        }
        // Rearranged line equation for y_i; must agree with σ_i^N.
        let denom = age + gamma * (k_next - k_0);
        if denom.abs() > 1e-12 {
            let y_line = (k_i - cost_coeff * p - gamma * k_0) / denom;
            worst_line_gap = worst_line_gap.max((y_line - y).abs());
        }
    }
    let details = format!(
        "kind={} interior_states={} worst_state={:?} max|y_line - sigma^N|={:.3e}",
        kind, interior, worst_state, worst_line_gap
    );
    Ok(TheoryCheckResult::new("implicit_equation_residual", worst_rel, 1e-6, details))
}

/// Checks `p_{i+1} >= p_i − 1e−12` across the whole policy.
pub fn verify_monotonicity(policy: &Policy) -> TheoryCheckResult {
    let mut worst = 0.0f64;
    let mut worst_state = 0usize;
    for (i, w) in policy.probs.windows(2).enumerate() {
        let drop = w[0] - w[1];
        if drop > worst {
            worst = drop;
            worst_state = i;
        }
    }
    let details = format!("states={} worst_drop_at={}", policy.len(), worst_state);
    TheoryCheckResult::new("policy_monotonicity", worst, 1e-12, details)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Policy;

    fn params(n: u32, cost: f64, delta_max: usize) -> ModelParams {
        ModelParams::new(n, cost, 0.9, delta_max, 11)
    }

    #[test]
    fn update_probability_examples() {
        let p = params(10, 1.0, 4);
        let policy = Policy::new(vec![1.0, 0.012, 0.5, 0.0], RewardKind::Selfish, &p).unwrap();
        let u = update_probabilities(&policy, &p, RewardKind::Selfish).unwrap();
        assert_eq!(u[0], 1.0);
        assert!((u[1] - (1.0 - 0.988f64.powi(10))).abs() < 1e-15);
        assert!((u[1] - 0.11377).abs() < 5e-6);
        assert_eq!(u[3], 0.0);

        let central = update_probabilities(&policy, &p, RewardKind::Centralized).unwrap();
        assert_eq!(central[2], 0.5);
    }

    #[test]
    fn stationary_instant_reset() {
        assert_eq!(stationary_distribution(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn stationary_deterministic_cycle() {
        let pi = stationary_distribution(&[0.0, 0.0, 1.0]).unwrap();
        for x in pi {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn stationary_two_state_balance() {
        let pi = stationary_distribution(&[0.5, 1.0]).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((pi[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn stationary_rejects_absorbing_boundary() {
        assert_eq!(stationary_distribution(&[0.0, 0.0, 0.0]), Err(AnalysisError::AbsorbingBoundary));
        assert_eq!(stationary_distribution(&[0.5, 0.0]), Err(AnalysisError::AbsorbingBoundary));
        // Unreachable boundary is fine even with u = 0 there.
        assert_eq!(stationary_distribution(&[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn stationary_is_balanced() {
        let u = [0.1, 0.3, 0.0, 0.7, 0.25];
        let pi = stationary_distribution(&u).unwrap();
        let total: f64 = pi.iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
        let inflow: f64 = pi.iter().zip(&u).map(|(p, q)| p * q).sum();
        assert!((pi[0] - inflow).abs() < 1e-10);
    }

    #[test]
    fn metrics_always_transmit_centralized() {
        let p = params(1, 7.0, 5);
        let policy = Policy::uniform(1.0, RewardKind::Centralized, &p).unwrap();
        let stats = chain_metrics(&policy, &p, RewardKind::Centralized).unwrap();
        assert_eq!(stats.avg_update, 1.0);
        assert_eq!(stats.avg_aoi, 0.0);
        assert_eq!(stats.avg_cost, 7.0);
        assert_eq!(stats.avg_reward, -7.0);
        assert_eq!(stats.boundary_mass, 0.0);
    }

    #[test]
    fn metrics_hard_threshold_cycle() {
        // Threshold 9 with c = 50: period-10 cycle through states 0..9.
        let p = ModelParams::new(1, 50.0, 0.9, 20, 2);
        let mut probs = vec![0.0; 20];
        for entry in probs.iter_mut().skip(9) {
            *entry = 1.0;
        }
        let policy = Policy::new(probs, RewardKind::Centralized, &p).unwrap();
        let stats = chain_metrics(&policy, &p, RewardKind::Centralized).unwrap();
        assert!((stats.avg_update - 0.1).abs() < 1e-12);
        assert!((stats.avg_aoi - 4.5).abs() < 1e-12);
        assert!((stats.avg_cost - 5.0).abs() < 1e-12);
        assert!((stats.avg_reward - (-9.5)).abs() < 1e-12);
    }

    #[test]
    fn metrics_threshold_ten_reproduces_reference_point() {
        // Threshold 10 at c = 50: Ū = 1/11, Δ̄ = 5, C̄ = 50/11, R̄ = −105/11.
        let p = ModelParams::new(1, 50.0, 0.9, 20, 2);
        let mut probs = vec![0.0; 20];
        for entry in probs.iter_mut().skip(10) {
            *entry = 1.0;
        }
        let policy = Policy::new(probs, RewardKind::Centralized, &p).unwrap();
        let stats = chain_metrics(&policy, &p, RewardKind::Centralized).unwrap();
        assert!((stats.avg_update - 1.0 / 11.0).abs() < 1e-12);
        assert!((stats.avg_aoi - 5.0).abs() < 1e-12);
        assert!((stats.avg_cost - 50.0 / 11.0).abs() < 1e-12);
        assert!((stats.avg_reward - (-105.0 / 11.0)).abs() < 1e-12);
    }

    #[test]
    fn metrics_system_cost_scales_with_sources() {
        let p = params(10, 3.0, 5);
        let policy = Policy::uniform(1.0, RewardKind::Selfish, &p).unwrap();
        let stats = chain_metrics(&policy, &p, RewardKind::Selfish).unwrap();
        assert_eq!(stats.avg_cost, 30.0);
        assert_eq!(stats.avg_reward, -30.0);
    }

    #[test]
    fn threshold_formula_reference_values() {
        assert_eq!(centralized_threshold(50.0), 9);
        assert_eq!(centralized_threshold(0.5), 0);
        assert_eq!(centralized_threshold(2.0), 1);
        assert_eq!(centralized_threshold(0.0), 0);
        assert_eq!(centralized_threshold(10.0), 4);
        assert_eq!(centralized_threshold(200.0), 19);
    }

    #[test]
    fn extract_threshold_shapes() {
        let p = ModelParams::new(1, 1.0, 0.9, 5, 2);
        let hard = Policy::new(vec![0.0, 0.0, 0.0, 1.0, 1.0], RewardKind::Centralized, &p).unwrap();
        let report = extract_threshold(&hard, 0.01).unwrap();
        assert_eq!(report.shape, PolicyShape::HardThreshold { threshold: 3 });
        assert_eq!(report.hard_threshold(), Some(3));

        let all_one = Policy::uniform(1.0, RewardKind::Centralized, &p).unwrap();
        assert_eq!(
            extract_threshold(&all_one, 0.01).unwrap().shape,
            PolicyShape::HardThreshold { threshold: 0 }
        );

        let all_zero = Policy::uniform(0.0, RewardKind::Centralized, &p).unwrap();
        assert_eq!(
            extract_threshold(&all_zero, 0.01).unwrap().shape,
            PolicyShape::Smooth { first_nonzero: None, first_saturated: None }
        );

        let ramp = Policy::new(vec![0.0, 0.1, 0.4, 0.8, 0.999], RewardKind::Selfish, &p).unwrap();
        let report = extract_threshold(&ramp, 1e-3).unwrap();
        assert_eq!(
            report.shape,
            PolicyShape::Smooth { first_nonzero: Some(1), first_saturated: Some(4) }
        );

        assert!(extract_threshold(&ramp, 0.7).is_err());
        assert!(extract_threshold(&ramp, 0.0).is_err());
    }

    #[test]
    fn monotonicity_check() {
        let p = ModelParams::new(1, 1.0, 0.9, 3, 2);
        let ok = Policy::new(vec![0.0, 0.0, 1.0], RewardKind::Centralized, &p).unwrap();
        assert!(verify_monotonicity(&ok).passed);

        let p2 = ModelParams::new(1, 1.0, 0.9, 2, 2);
        let bad = Policy::new(vec![0.2, 0.1], RewardKind::Centralized, &p2).unwrap();
        let result = verify_monotonicity(&bad);
        assert!(!result.passed);
        assert!((result.worst_violation - 0.1).abs() < 1e-15);
    }

    #[test]
    fn theorem2_trivial_at_zero_cost() {
        let p = ModelParams::new(1, 0.0, 0.9, 10, 5);
        let result = verify_theorem2(&p, RewardKind::Centralized, &SolveConfig::default()).unwrap();
        assert!(result.passed);
        assert!(result.worst_violation <= 0.0);
    }

    #[test]
    fn implicit_equation_vacuous_for_extreme_policies() {
        let p = params(5, 4.0, 8);
        let policy = Policy::uniform(1.0, RewardKind::Selfish, &p).unwrap();
        let values = policy_value(&p, RewardKind::Selfish, &policy, &SolveConfig::default()).unwrap();
        let result = verify_implicit_equation(&p, RewardKind::Selfish, &policy, &values).unwrap();
        assert!(result.passed);
        assert_eq!(result.worst_violation, 0.0);
    }

    #[test]
    fn implicit_equation_holds_at_evaluated_interior_policy() {
        let p = params(5, 4.0, 30);
        let probs: Vec<f64> = (0..30).map(|i| (0.02 * (i + 1) as f64).min(0.9)).collect();
        let policy = Policy::new(probs, RewardKind::Selfish, &p).unwrap();
        let values = policy_value(&p, RewardKind::Selfish, &policy, &SolveConfig::default()).unwrap();
        let result = verify_implicit_equation(&p, RewardKind::Selfish, &policy, &values).unwrap();
        assert!(result.passed, "residual {}", result.worst_violation);
    }
}
