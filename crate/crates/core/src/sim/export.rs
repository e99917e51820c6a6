use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::runner::ReplicationResult;
use crate::error::Result;

pub const TRAJECTORY_HEADER: [&str; 11] = [
    "policy",
    "noise_ratio",
    "trial",
    "step",
    "oc",
    "oc_pct",
    "estimation_error",
    "best_true_value",
    "probe_start",
    "probe_end",
    "observation",
];

pub const AGGREGATE_HEADER: [&str; 12] = [
    "policy",
    "noise_ratio",
    "step",
    "trials",
    "oc_mean",
    "oc_sd",
    "oc_pct_mean",
    "oc_pct_sd",
    "estimation_error_mean",
    "estimation_error_sd",
    "best_true_value_mean",
    "best_true_value_sd",
];

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Sample mean and sd (n − 1 denominator; sd 0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn write_trajectories(results: &[ReplicationResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRAJECTORY_HEADER)?;
    for r in results {
        for step in 0..r.oc_trajectory.len() {
            let (start, end, obs) = if step == 0 {
                (String::new(), String::new(), String::new())
            } else {
                let d = r.decisions[step - 1];
                (d.start.to_string(), d.end.to_string(), fmt(r.observations[step - 1]))
            };
            w.write_record([
                r.policy.name().to_string(),
                fmt(r.noise_ratio),
                r.trial.to_string(),
                step.to_string(),
                fmt(r.oc_trajectory[step]),
                r.oc_pct_trajectory[step].map(fmt).unwrap_or_default(),
                fmt(r.estimation_error_trajectory[step]),
                fmt(r.best_true_value_trajectory[step]),
                start,
                end,
                obs,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Key ordering for aggregation: policy name, then noise ratio bits.
fn group_key(r: &ReplicationResult) -> (String, u64) {
    (r.policy.name().to_string(), r.noise_ratio.to_bits())
}

pub fn write_aggregate(results: &[ReplicationResult], path: &Path) -> Result<()> {
    let mut groups: BTreeMap<(String, u64), Vec<&ReplicationResult>> = BTreeMap::new();
    for r in results {
        groups.entry(group_key(r)).or_default().push(r);
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(AGGREGATE_HEADER)?;
    for ((policy, noise_bits), rs) in groups {
        let steps = rs.iter().map(|r| r.oc_trajectory.len()).max().unwrap_or(0);
        for step in 0..steps {
            let at = |f: &dyn Fn(&ReplicationResult) -> Option<f64>| -> Vec<f64> {
                rs.iter().filter_map(|r| f(r)).collect()
            };
            let oc = at(&|r| r.oc_trajectory.get(step).copied());
            let pct = at(&|r| r.oc_pct_trajectory.get(step).copied().flatten());
            let err = at(&|r| r.estimation_error_trajectory.get(step).copied());
            let best = at(&|r| r.best_true_value_trajectory.get(step).copied());
            let mut rec = vec![
                policy.clone(),
                fmt(f64::from_bits(noise_bits)),
                step.to_string(),
                oc.len().to_string(),
            ];
            for v in [&oc, &pct, &err, &best] {
                let (m, s) = mean_sd(v);
                if v.is_empty() {
                    rec.extend([String::new(), String::new()]);
                } else {
                    rec.extend([fmt(m), fmt(s)]);
                }
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub noise_ratio: f64,
    pub trials: usize,
    /// Mean of the final OC% over trials where it is defined.
    pub mean_final_oc_pct: Option<f64>,
    pub mean_final_oc: f64,
    pub homotopy_fallbacks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub trajectories: String,
    pub aggregate: String,
    pub policies: Vec<PolicySummary>,
}

pub fn summarize(results: &[ReplicationResult]) -> Vec<PolicySummary> {
    let mut groups: BTreeMap<(String, u64), Vec<&ReplicationResult>> = BTreeMap::new();
    for r in results {
        groups.entry(group_key(r)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((policy, bits), rs)| {
            let pct: Vec<f64> = rs
                .iter()
                .filter_map(|r| r.oc_pct_trajectory.last().copied().flatten())
                .collect();
            let oc: Vec<f64> = rs.iter().filter_map(|r| r.oc_trajectory.last().copied()).collect();
            PolicySummary {
                policy,
                noise_ratio: f64::from_bits(bits),
                trials: rs.len(),
                mean_final_oc_pct: (!pct.is_empty()).then(|| mean_sd(&pct).0),
                mean_final_oc: mean_sd(&oc).0,
                homotopy_fallbacks: rs.iter().map(|r| r.homotopy_fallbacks).sum(),
            }
        })
        .collect()
}

/// Writes `trajectories.csv` and `aggregate.csv` into `dir`.
pub fn export_results(results: &[ReplicationResult], dir: &Path) -> Result<RunSummary> {
    std::fs::create_dir_all(dir)?;
    let traj = dir.join("trajectories.csv");
    let agg = dir.join("aggregate.csv");
    write_trajectories(results, &traj)?;
    write_aggregate(results, &agg)?;
    Ok(RunSummary {
        trajectories: traj.display().to_string(),
        aggregate: agg.display().to_string(),
        policies: summarize(results),
    })
}
