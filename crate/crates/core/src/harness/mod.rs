//! Parameter sweeps, stable file formats, calibration against the embedded
//! reference curves, and the verification suites behind the CLI.

pub mod io;
pub mod refdata;
pub mod verify;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    chain_metrics, extract_threshold, AnalysisError, ChainStats, PolicyShape, ThresholdReport,
    DEFAULT_THRESHOLD_EPSILON,
};
use crate::model::{
    ModelError, ModelParams, Policy, RewardKind, DEFAULT_DELTA_MAX, DEFAULT_DISCOUNT,
    DEFAULT_GRID_SIZE,
};
use crate::montecarlo::{simulate, SimConfig, SimError, SimEstimate};
use crate::solver::{value_iteration, SolveConfig};

/// Stationary mass at the truncation boundary above which a record should be
/// treated as truncation-affected (`delta_max` too small).
pub const BOUNDARY_MASS_WARN: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("record has no chain stats to emit")]
    MissingStats,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Inclusive arithmetic cost range `start:stop:step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl CostRange {
    pub fn new(start: f64, stop: f64, step: f64) -> Self {
        Self { start, stop, step }
    }

    pub fn single(cost: f64) -> Self {
        Self { start: cost, stop: cost, step: 1.0 }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.step > 0.0) {
            return Err(HarnessError::InvalidSweep(format!("cost step {} must be > 0", self.step)));
        }
        if self.stop < self.start {
            return Err(HarnessError::InvalidSweep(format!(
                "cost range {}:{} is empty",
                self.start, self.stop
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut i = 0u64;
        loop {
            let c = self.start + i as f64 * self.step;
            if c > self.stop + self.step * 1e-9 {
                break;
            }
            out.push(c);
            i += 1;
        }
        out
    }

    /// Parses `A:B:S`, `A:B` (step 1), or a single value `A`.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let bad = |msg: &str| HarnessError::InvalidSweep(format!("cost range '{text}': {msg}"));
        let parts: Vec<&str> = text.split(':').collect();
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
        let range = match parts.as_slice() {
            [a] => Self::single(num(a)?),
            [a, b] => Self::new(num(a)?, num(b)?, 1.0),
            [a, b, s] => Self::new(num(a)?, num(b)?, num(s)?),
            _ => return Err(bad("expected start:stop:step")),
        };
        range.validate()?;
        Ok(range)
    }
}

/// One sweep: the cross product of kinds, source counts, and costs under a
/// common discount/truncation/grid and solver configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub costs: CostRange,
    pub n_sources_list: Vec<u32>,
    pub kinds: Vec<RewardKind>,
    pub discount: f64,
    pub delta_max: usize,
    pub grid_size: usize,
    pub solve: SolveConfig,
    pub sim: Option<SimConfig>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            costs: CostRange::new(10.0, 190.0, 2.0),
            n_sources_list: vec![10],
            kinds: RewardKind::ALL.to_vec(),
            discount: DEFAULT_DISCOUNT,
            delta_max: DEFAULT_DELTA_MAX,
            grid_size: DEFAULT_GRID_SIZE,
            solve: SolveConfig::default(),
            sim: None,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.costs.validate()?;
        if self.n_sources_list.is_empty() {
            return Err(HarnessError::InvalidSweep("no source counts given".into()));
        }
        if self.kinds.is_empty() {
            return Err(HarnessError::InvalidSweep("no reward kinds given".into()));
        }
        let probe = ModelParams::new(
            *self.n_sources_list.iter().min().unwrap(),
            self.costs.start,
            self.discount,
            self.delta_max,
            self.grid_size,
        );
        probe.validate()?;
        self.solve.validate()?;
        if let Some(sim) = &self.sim {
            sim.validate()?;
        }
        Ok(())
    }

    fn points(&self) -> Vec<(RewardKind, u32, f64)> {
        let mut kinds = self.kinds.clone();
        kinds.sort();
        kinds.dedup();
        let mut sources = self.n_sources_list.clone();
        sources.sort_unstable();
        sources.dedup();
        let mut out = Vec::new();
        for &kind in &kinds {
            for &n in &sources {
                for c in self.costs.values() {
                    out.push((kind, n, c));
                }
            }
        }
        out
    }
}

/// Self-describing result of a single solve: everything needed to re-run it,
/// the per-state solution, the chain statistics, and optional simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub kind: RewardKind,
    pub params: ModelParams,
    pub solve: SolveConfig,
    pub fingerprint: String,
    pub policy: Vec<f64>,
    pub values: Vec<f64>,
    pub iterations_run: usize,
    pub final_residual: f64,
    pub stats: Option<ChainStats>,
    pub threshold: Option<ThresholdReport>,
    pub sim: Option<SimEstimate>,
    pub duration_ms: f64,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn policy_struct(&self) -> Policy {
        Policy { probs: self.policy.clone(), kind: self.kind, params_fingerprint: self.fingerprint.clone() }
    }

    pub fn truncation_suspect(&self) -> bool {
        self.stats.as_ref().is_some_and(|s| s.boundary_mass > BOUNDARY_MASS_WARN)
    }
}

/// Solves one sweep point and derives its statistics; failures are captured in
/// the record instead of propagating.
pub fn solve_record(
    params: &ModelParams,
    kind: RewardKind,
    solve: &SolveConfig,
    sim: Option<&SimConfig>,
) -> RunRecord {
    let started = Instant::now();
    let mut record = RunRecord {
        kind,
        params: params.clone(),
        solve: solve.clone(),
        fingerprint: params.fingerprint(),
        policy: Vec::new(),
        values: Vec::new(),
        iterations_run: 0,
        final_residual: f64::NAN,
        stats: None,
        threshold: None,
        sim: None,
        duration_ms: 0.0,
        error: None,
    };
    let outcome = (|| -> Result<(), HarnessError> {
        let (vf, policy) = value_iteration(params, kind, solve)?;
        record.policy = policy.probs.clone();
        record.values = vf.values.clone();
        record.iterations_run = vf.iterations_run;
        record.final_residual = vf.final_residual;
        record.stats = Some(chain_metrics(&policy, params, kind)?);
        record.threshold = Some(extract_threshold(&policy, DEFAULT_THRESHOLD_EPSILON)?);
        if let Some(sim_cfg) = sim {
            record.sim = Some(simulate(&policy, params, kind, sim_cfg)?);
        }
        Ok(())
    })();
    if let Err(err) = outcome {
        record.error = Some(err.to_string());
    }
    record.duration_ms = started.elapsed().as_secs_f64() * 1e3;
    record
}

/// Runs the whole sweep on the rayon pool; records come back in the
/// deterministic `(kind, n_sources, cost)` order regardless of scheduling,
/// and individual failures never abort the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<RunRecord>, HarnessError> {
    spec.validate()?;
    let points = spec.points();
    let records = points
        .into_par_iter()
        .map(|(kind, n, cost)| {
            let params = ModelParams::new(n, cost, spec.discount, spec.delta_max, spec.grid_size);
            solve_record(&params, kind, &spec.solve, spec.sim.as_ref())
        })
        .collect();
    Ok(records)
}

/// Fit of one candidate discount against the reference update curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub discount: f64,
    /// `(state, reference u, solved u)` at every embedded reference state.
    pub curve: Vec<(usize, f64, f64)>,
    pub mean_abs_dev: f64,
    /// Largest absolute deviation over the anchor states.
    pub max_anchor_dev: f64,
    /// Number of distinct solved transmission probabilities strictly inside
    /// (0, 1); a hard threshold has zero, a smooth ramp has many.
    pub distinct_interior: usize,
}

/// Outcome of the calibration sweep over [`refdata::CALIBRATION_DISCOUNTS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n_sources: u32,
    pub cost: f64,
    pub delta_max: usize,
    pub grid_size: usize,
    pub fits: Vec<GammaFit>,
    pub best_discount: f64,
    /// Shape of the centralized solution at the best discount; expected to be
    /// a hard threshold, contrasting the smooth distributed curve.
    pub centralized_shape: PolicyShape,
}

impl CalibrationReport {
    pub fn best_fit(&self) -> &GammaFit {
        self.fits
            .iter()
            .find(|f| f.discount == self.best_discount)
            .expect("best_discount is one of the fits")
    }
}

fn fit_discount(discount: f64, delta_max: usize, grid_size: usize, solve: &SolveConfig) -> Result<GammaFit, HarnessError> {
    let params = ModelParams::new(10, 50.0, discount, delta_max, grid_size);
    let (_, policy) = value_iteration(&params, RewardKind::Selfish, solve)?;
    let u = crate::analysis::update_probabilities(&policy, &params, RewardKind::Selfish)?;

    let curve: Vec<(usize, f64, f64)> = refdata::SELFISH_N10_C50_UPDATE_CURVE
        .iter()
        .map(|&(state, reference)| (state, reference, u[state]))
        .collect();
    let mean_abs_dev =
        curve.iter().map(|&(_, r, got)| (got - r).abs()).sum::<f64>() / curve.len() as f64;
    let max_anchor_dev = refdata::CALIBRATION_ANCHOR_STATES
        .iter()
        .map(|&s| {
            let reference = refdata::SELFISH_N10_C50_UPDATE_CURVE
                .iter()
                .find(|&&(state, _)| state == s)
                .expect("anchor states are reference states")
                .1;
            (u[s] - reference).abs()
        })
        .fold(0.0, f64::max);

    let mut interior: Vec<u64> = policy
        .probs
        .iter()
        .filter(|&&p| p > 0.0 && p < 1.0)
        .map(|p| p.to_bits())
        .collect();
    interior.sort_unstable();
    interior.dedup();

    Ok(GammaFit {
        discount,
        curve,
        mean_abs_dev,
        max_anchor_dev,
        distinct_interior: interior.len(),
    })
}

/// Solves the reference instance (distributed selfish, `N = 10`, `c = 50`)
/// under each candidate discount and reports which one best matches the
/// embedded reference curve.
pub fn calibrate(solve: &SolveConfig) -> Result<CalibrationReport, HarnessError> {
    let delta_max = DEFAULT_DELTA_MAX;
    let grid_size = DEFAULT_GRID_SIZE;
    let fits: Vec<GammaFit> = refdata::CALIBRATION_DISCOUNTS
        .par_iter()
        .map(|&g| fit_discount(g, delta_max, grid_size, solve))
        .collect::<Result<_, _>>()?;
    let best = fits
        .iter()
        .min_by(|a, b| a.mean_abs_dev.total_cmp(&b.mean_abs_dev))
        .expect("at least one candidate discount");
    let best_discount = best.discount;

    let central_params = ModelParams::new(10, 50.0, best_discount, 200, grid_size);
    let (_, central_policy) = value_iteration(&central_params, RewardKind::Centralized, solve)?;
    let centralized_shape = extract_threshold(&central_policy, DEFAULT_THRESHOLD_EPSILON)?.shape;

    Ok(CalibrationReport {
        n_sources: 10,
        cost: 50.0,
        delta_max,
        grid_size,
        fits,
        best_discount,
        centralized_shape,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_range_parse_and_values() {
        let r = CostRange::parse("10:16:2").unwrap();
        assert_eq!(r.values(), vec![10.0, 12.0, 14.0, 16.0]);
        let single = CostRange::parse("50").unwrap();
        assert_eq!(single.values(), vec![50.0]);
        let pair = CostRange::parse("3:5").unwrap();
        assert_eq!(pair.values(), vec![3.0, 4.0, 5.0]);
        assert!(CostRange::parse("5:1:1").is_err());
        assert!(CostRange::parse("1:5:0").is_err());
        assert!(CostRange::parse("a:b:c").is_err());
        assert!(CostRange::parse("1:2:3:4").is_err());
    }

    #[test]
    fn sweep_is_ordered_and_deterministic() {
        let spec = SweepSpec {
            costs: CostRange::new(0.0, 2.0, 1.0),
            n_sources_list: vec![3, 2],
            kinds: vec![RewardKind::Centralized, RewardKind::Selfish],
            discount: 0.9,
            delta_max: 12,
            grid_size: 5,
            solve: SolveConfig::default(),
            sim: None,
        };
        let records = run_sweep(&spec).unwrap();
        assert_eq!(records.len(), 12);
        let keys: Vec<(RewardKind, u32, f64)> =
            records.iter().map(|r| (r.kind, r.params.n_sources, r.params.cost)).collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
        assert_eq!(keys, sorted);
        assert!(records.iter().all(|r| r.error.is_none()));

        let again = run_sweep(&spec).unwrap();
        assert_eq!(records, again);
    }

    #[test]
    fn zero_cost_point_has_trivial_metrics() {
        let spec = SweepSpec {
            costs: CostRange::single(0.0),
            n_sources_list: vec![1],
            kinds: vec![RewardKind::Centralized],
            discount: 0.9,
            delta_max: 16,
            grid_size: 5,
            solve: SolveConfig::default(),
            sim: None,
        };
        let records = run_sweep(&spec).unwrap();
        let stats = records[0].stats.as_ref().unwrap();
        assert_eq!(stats.avg_update, 1.0);
        assert_eq!(stats.avg_aoi, 0.0);
        assert_eq!(records[0].threshold.as_ref().unwrap().hard_threshold(), Some(0));
    }

    #[test]
    fn failed_point_is_marked_not_fatal() {
        let params = ModelParams::new(0, 1.0, 0.9, 10, 5);
        let record = solve_record(&params, RewardKind::Selfish, &SolveConfig::default(), None);
        assert!(record.error.is_some());
        assert!(record.stats.is_none());
    }
}
