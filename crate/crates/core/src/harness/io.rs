//! Flat-file output: per-state policy CSVs, sweep metrics CSVs, and JSON
//! reports. CSV floats use the shortest round-trip decimal form, so files
//! reload bit-identically.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{ModelParams, RewardKind};

use super::{HarnessError, RunRecord};

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path, source: csv::Error) -> HarnessError {
    HarnessError::Csv { path: path.display().to_string(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> HarnessError {
    HarnessError::Format { path: path.display().to_string(), message: message.into() }
}

/// Parameter header carried as a `#` comment line in policy CSVs, so a policy
/// file is self-describing and can be simulated without repeating flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeta {
    pub kind: RewardKind,
    pub n_sources: u32,
    pub cost: f64,
    pub discount: f64,
    pub delta_max: usize,
    pub grid_size: usize,
}

impl PolicyMeta {
    pub fn params(&self) -> ModelParams {
        ModelParams::new(self.n_sources, self.cost, self.discount, self.delta_max, self.grid_size)
    }

    fn comment_line(&self) -> String {
        format!(
            "# kind={} n_sources={} cost={} discount={} delta_max={} grid_size={}",
            self.kind, self.n_sources, self.cost, self.discount, self.delta_max, self.grid_size
        )
    }

    fn parse_comment(line: &str, path: &Path) -> Result<Self, HarnessError> {
        let mut kind = None;
        let mut n_sources = None;
        let mut cost = None;
        let mut discount = None;
        let mut delta_max = None;
        let mut grid_size = None;
        for token in line.trim_start_matches('#').split_whitespace() {
            let Some((key, value)) = token.split_once('=') else { continue };
            match key {
                "kind" => {
                    kind = Some(RewardKind::parse(value).ok_or_else(|| {
                        format_err(path, format!("unknown reward kind '{value}'"))
                    })?)
                }
                "n_sources" => n_sources = value.parse().ok(),
                "cost" => cost = value.parse().ok(),
                "discount" => discount = value.parse().ok(),
                "delta_max" => delta_max = value.parse().ok(),
                "grid_size" => grid_size = value.parse().ok(),
                _ => {}
            }
        }
        match (kind, n_sources, cost, discount, delta_max, grid_size) {
            (Some(kind), Some(n_sources), Some(cost), Some(discount), Some(delta_max), Some(grid_size)) => {
                Ok(Self { kind, n_sources, cost, discount, delta_max, grid_size })
            }
            _ => Err(format_err(path, format!("incomplete parameter header '{line}'"))),
        }
    }
}

/// A loaded policy CSV: the parameter header plus the four per-state columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyFile {
    pub meta: Option<PolicyMeta>,
    pub p_star: Vec<f64>,
    pub u: Vec<f64>,
    pub pi: Vec<f64>,
    pub value: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PolicyRow {
    state: usize,
    p_star: f64,
    u: f64,
    pi: f64,
    value: f64,
}

/// Writes the per-state solution of a record: columns
/// `state,p_star,u,pi,value`, one row per state, preceded by a `#` parameter
/// header. Round-trips losslessly through [`load_policy_csv`].
pub fn emit_policy_csv(record: &RunRecord, path: &Path) -> Result<(), HarnessError> {
    let stats = record.stats.as_ref().ok_or(HarnessError::MissingStats)?;
    let meta = PolicyMeta {
        kind: record.kind,
        n_sources: record.params.n_sources,
        cost: record.params.cost,
        discount: record.params.discount,
        delta_max: record.params.delta_max,
        grid_size: record.params.grid_size,
    };
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    writeln!(file, "{}", meta.comment_line()).map_err(|e| io_err(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    for state in 0..record.params.delta_max {
        writer
            .serialize(PolicyRow {
                state,
                p_star: record.policy[state],
                u: stats.update_probs[state],
                pi: stats.stationary[state],
                value: record.values[state],
            })
            .map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads a policy CSV written by [`emit_policy_csv`] (the parameter header is
/// optional for externally produced files).
pub fn load_policy_csv(path: &Path) -> Result<PolicyFile, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let meta = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .next()
        .map(|line| PolicyMeta::parse_comment(line, path))
        .transpose()?;

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = PolicyFile { meta, p_star: Vec::new(), u: Vec::new(), pi: Vec::new(), value: Vec::new() };
    for (index, row) in reader.deserialize::<PolicyRow>().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        if row.state != index {
            return Err(format_err(path, format!("expected state {index}, found {}", row.state)));
        }
        out.p_star.push(row.p_star);
        out.u.push(row.u);
        out.pi.push(row.pi);
        out.value.push(row.value);
    }
    if out.p_star.is_empty() {
        return Err(format_err(path, "no data rows"));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct MetricsRow<'a> {
    kind: &'a str,
    n_sources: u32,
    cost: f64,
    gamma: f64,
    delta_max: usize,
    grid_size: usize,
    #[serde(rename = "U_bar")]
    u_bar: Option<f64>,
    #[serde(rename = "AoI_bar")]
    aoi_bar: Option<f64>,
    #[serde(rename = "C_bar")]
    c_bar: Option<f64>,
    #[serde(rename = "R_bar")]
    r_bar: Option<f64>,
    threshold: Option<usize>,
    boundary_mass: Option<f64>,
}

/// Writes one metrics row per record: sweep rows that failed keep their
/// parameter columns and leave the metric cells empty.
pub fn emit_metrics_csv(records: &[RunRecord], path: &Path) -> Result<(), HarnessError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for record in records {
        let stats = record.stats.as_ref();
        writer
            .serialize(MetricsRow {
                kind: record.kind.label(),
                n_sources: record.params.n_sources,
                cost: record.params.cost,
                gamma: record.params.discount,
                delta_max: record.params.delta_max,
                grid_size: record.params.grid_size,
                u_bar: stats.map(|s| s.avg_update),
                aoi_bar: stats.map(|s| s.avg_aoi),
                c_bar: stats.map(|s| s.avg_cost),
                r_bar: stats.map(|s| s.avg_reward),
                threshold: record.threshold.as_ref().and_then(|t| t.hard_threshold()),
                boundary_mass: stats.map(|s| s.boundary_mass),
            })
            .map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    // serde-driven writers only emit the header once a row has been written;
    // an empty sweep must still produce the header line.
    if records.is_empty() {
        fs::write(
            path,
            "kind,n_sources,cost,gamma,delta_max,grid_size,U_bar,AoI_bar,C_bar,R_bar,threshold,boundary_mass\n",
        )
        .map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

/// Serializes any report as pretty JSON with path context on failure.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), HarnessError> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    serde_json::to_writer_pretty(&file, value)
        .map_err(|e| format_err(path, e.to_string()))?;
    let mut file = file;
    writeln!(file).map_err(|e| io_err(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::solver::SolveConfig;

    fn record_for(probs: Vec<f64>) -> RunRecord {
        let params = ModelParams::new(2, 3.0, 0.9, probs.len(), 5);
        let policy = crate::model::Policy::new(probs, RewardKind::Selfish, &params).unwrap();
        let stats = crate::analysis::chain_metrics(&policy, &params, RewardKind::Selfish).unwrap();
        let values = crate::solver::policy_value(&params, RewardKind::Selfish, &policy, &SolveConfig::default())
            .unwrap();
        RunRecord {
            kind: RewardKind::Selfish,
            params: params.clone(),
            solve: SolveConfig::default(),
            fingerprint: params.fingerprint(),
            policy: policy.probs.clone(),
            values: values.values,
            iterations_run: values.iterations_run,
            final_residual: values.final_residual,
            stats: Some(stats),
            threshold: Some(crate::analysis::extract_threshold(&policy, 1e-3).unwrap()),
            sim: None,
            duration_ms: 0.0,
            error: None,
        }
    }

    #[test]
    fn policy_csv_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            vec![0.0, 0.0, 0.0, 1.0, 1.0],
            vec![1.0; 6],
            vec![0.0, 0.1234567890123456, 0.25, 0.75, 0.9999999999999999, 1.0],
        ];
        for (i, probs) in cases.into_iter().enumerate() {
            let record = record_for(probs);
            let path = dir.path().join(format!("policy_{i}.csv"));
            emit_policy_csv(&record, &path).unwrap();
            let loaded = load_policy_csv(&path).unwrap();
            let stats = record.stats.as_ref().unwrap();
            assert_eq!(loaded.p_star, record.policy);
            assert_eq!(loaded.u, stats.update_probs);
            assert_eq!(loaded.pi, stats.stationary);
            assert_eq!(loaded.value, record.values);
            let meta = loaded.meta.unwrap();
            assert_eq!(meta.params(), record.params);
            assert_eq!(meta.kind, record.kind);
        }
    }

    #[test]
    fn policy_csv_has_mandatory_header_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.csv");
        emit_policy_csv(&record_for(vec![0.5; 4]), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# kind=selfish"));
        assert_eq!(lines.next().unwrap(), "state,p_star,u,pi,value");
        assert_eq!(lines.count(), 4);
    }

    #[test]
    fn metrics_csv_rows_and_empty_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let records = vec![record_for(vec![0.5; 4]), record_for(vec![1.0; 4]), record_for(vec![0.2, 0.4, 0.9, 1.0])];
        emit_metrics_csv(&records, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "kind,n_sources,cost,gamma,delta_max,grid_size,U_bar,AoI_bar,C_bar,R_bar,threshold,boundary_mass"
        );
        assert_eq!(lines.len(), 4);

        let empty = dir.path().join("empty.csv");
        emit_metrics_csv(&[], &empty).unwrap();
        assert_eq!(fs::read_to_string(&empty).unwrap().lines().count(), 1);
    }

    #[test]
    fn loader_rejects_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "state,p_star,u,pi,value\n1,0.5,0.5,1.0,-1.0\n").unwrap();
        assert!(matches!(load_policy_csv(&path), Err(HarnessError::Format { .. })));
        fs::write(&path, "state,p_star,u,pi,value\n").unwrap();
        assert!(load_policy_csv(&path).is_err());
        fs::write(&path, "# kind=bogus n_sources=1 cost=1 discount=0.9 delta_max=4 grid_size=5\nstate,p_star,u,pi,value\n0,0,0,1,0\n").unwrap();
        assert!(load_policy_csv(&path).is_err());
    }
}
