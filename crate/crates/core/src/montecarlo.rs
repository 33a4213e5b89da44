//! Slot-level Monte-Carlo oracle: simulates the sources applying a policy and
//! estimates the four long-run metrics with across-replica standard errors.
//!
//! Replicas use independent ChaCha8 streams derived from (seed, replica
//! index), so they can run in parallel while the aggregate stays bit-identical
//! for a given configuration; the per-slot dynamics mirror the analytical
//! truncation (AoI clamped at `delta_max − 1`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ModelParams, Policy, RewardKind};

/// Generator recorded in every estimate for reproducibility.
pub const RNG_LABEL: &str = "chacha8(seed, stream=replica)";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Simulated slots per replica.
    pub slots: u64,
    /// Initial slots discarded before accumulating; defaults to 1% of `slots`.
    pub burn_in: u64,
    pub seed: u64,
    pub replicas: u32,
}

impl SimConfig {
    pub fn new(slots: u64, seed: u64, replicas: u32) -> Self {
        Self { slots, burn_in: slots / 100, seed, replicas }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.slots == 0 {
            return Err(SimError::InvalidConfig("slots must be positive".into()));
        }
        if self.burn_in >= self.slots {
            return Err(SimError::InvalidConfig(format!(
                "burn_in {} must be smaller than slots {}",
                self.burn_in, self.slots
            )));
        }
        if self.replicas == 0 {
            return Err(SimError::InvalidConfig("replicas must be >= 1".into()));
        }
        Ok(())
    }
}

/// Point estimates of the four metrics with across-replica standard errors,
/// in the order (update, AoI, cost, reward).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub avg_update: f64,
    pub avg_aoi: f64,
    pub avg_cost: f64,
    pub avg_reward: f64,
    pub std_errors: [f64; 4],
    pub seed: u64,
    /// Accumulated slots across replicas, after burn-in.
    pub slots_effective: u64,
    pub rng: String,
}

struct ReplicaAccum {
    updates: u64,
    aoi_sum: u64,
    transmissions: u64,
    idle_age_sum: u64,
    visits: Vec<u64>,
}

fn run_replica(
    policy: &Policy,
    params: &ModelParams,
    kind: RewardKind,
    sim: &SimConfig,
    replica: u32,
) -> ReplicaAccum {
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    rng.set_stream(replica as u64);

    let draws = kind.effective_sources(params.n_sources);
    let mut state = 0usize;
    let mut acc = ReplicaAccum {
        updates: 0,
        aoi_sum: 0,
        transmissions: 0,
        idle_age_sum: 0,
        visits: vec![0; params.delta_max],
    };
    for slot in 0..sim.slots {
        let p = policy.probs[state];
        let mut transmitters = 0u64;
        for _ in 0..draws {
            if rng.random::<f64>() < p {
                transmitters += 1;
            }
        }
        if slot >= sim.burn_in {
            acc.visits[state] += 1;
            acc.aoi_sum += state as u64;
            acc.transmissions += transmitters;
            if transmitters > 0 {
                acc.updates += 1;
            } else {
                acc.idle_age_sum += state as u64 + 1;
            }
        }
        state = if transmitters > 0 { 0 } else { params.advance_target(state) };
    }
    acc
}

/// Simulates the system and also returns the empirical per-state visit
/// frequencies (normalized over effective slots).
pub fn simulate_with_frequencies(
    policy: &Policy,
    params: &ModelParams,
    kind: RewardKind,
    sim: &SimConfig,
) -> Result<(SimEstimate, Vec<f64>), SimError> {
    params.validate()?;
    sim.validate()?;
    if policy.len() != params.delta_max {
        return Err(ModelError::PolicyLengthMismatch { len: policy.len(), delta_max: params.delta_max }.into());
    }

    let replicas: Vec<ReplicaAccum> = (0..sim.replicas)
        .into_par_iter()
        .map(|r| run_replica(policy, params, kind, sim, r))
        .collect();

    let per_replica = sim.slots - sim.burn_in;
    let n = per_replica as f64;
    // Per-replica metric estimates, folded in replica order.
    let mut metrics = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    let mut visits = vec![0u64; params.delta_max];
    for acc in &replicas {
        let update = acc.updates as f64 / n;
        let aoi = acc.aoi_sum as f64 / n;
        let cost = params.cost * acc.transmissions as f64 / n;
        let reward = -(acc.idle_age_sum as f64 / n) - cost;
        metrics[0].push(update);
        metrics[1].push(aoi);
        metrics[2].push(cost);
        metrics[3].push(reward);
        for (total, v) in visits.iter_mut().zip(&acc.visits) {
            *total += v;
        }
    }

    let mut means = [0.0; 4];
    let mut std_errors = [0.0; 4];
    for (k, series) in metrics.iter().enumerate() {
        let r = series.len() as f64;
        let mean = series.iter().sum::<f64>() / r;
        means[k] = mean;
        if series.len() > 1 {
            let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (r - 1.0);
            std_errors[k] = (var / r).sqrt();
        }
    }

    let slots_effective = per_replica * sim.replicas as u64;
    let frequencies = visits.into_iter().map(|v| v as f64 / slots_effective as f64).collect();
    let estimate = SimEstimate {
        avg_update: means[0],
        avg_aoi: means[1],
        avg_cost: means[2],
        avg_reward: means[3],
        std_errors,
        seed: sim.seed,
        slots_effective,
        rng: RNG_LABEL.to_string(),
    };
    Ok((estimate, frequencies))
}

/// Simulates `N` sources (or the single coordinated one) applying `policy`
/// slot by slot; see [`SimEstimate`] for what is reported.
pub fn simulate(
    policy: &Policy,
    params: &ModelParams,
    kind: RewardKind,
    sim: &SimConfig,
) -> Result<SimEstimate, SimError> {
    simulate_with_frequencies(policy, params, kind, sim).map(|(estimate, _)| estimate)
}
