//! Strategy comparisons on one instance: gap curves and time-to-gap tables.

use serde::{Deserialize, Serialize};

use super::{run, DriverConfig, RunFailure, RunSummary, RunTrace};
use crate::model::Instance;

pub const CSV_HEADER: &str = "strategy,iteration,wall_ms,dual_bound,mu,gap_alg1,gap_d_j,lambda_norm,cut_origin";

#[derive(Clone, Debug)]
pub struct StrategyRun {
    pub name: String,
    pub summary: RunSummary,
    pub trace: RunTrace,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub runs: Vec<StrategyRun>,
}

/// Target gaps of the time-to-gap table.
pub const DEFAULT_TARGETS: [f64; 3] = [1e-3, 1e-4, 1e-5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeToGap {
    pub name: String,
    pub targets: Vec<f64>,
    /// Milliseconds until the gap to the best bound first fell to each target.
    pub times_ms: Vec<Option<f64>>,
}

/// Runs every named config on `instance`, in order.
pub fn compare_strategies(instance: &Instance, configs: &[(String, DriverConfig)]) -> Result<Comparison, RunFailure> {
    let runs = configs
        .iter()
        .map(|(name, cfg)| {
            let out = run(instance, cfg)?;
            Ok(StrategyRun { name: name.clone(), summary: out.summary, trace: out.trace })
        })
        .collect::<Result<Vec<_>, RunFailure>>()?;
    Ok(Comparison { runs })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Comparison {
    /// Smallest dual bound over all runs.
    pub fn best_dual(&self) -> f64 {
        self.runs.iter().map(|r| r.summary.dual_bound).fold(f64::INFINITY, f64::min)
    }

    /// One row per event carrying a master bound.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.runs {
            for e in &r.trace.events {
                if e.mu.is_none() {
                    continue;
                }
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    r.name,
                    e.j,
                    e.wall_ms,
                    e.dual_bound,
                    opt(e.mu),
                    opt(e.gap_alg1),
                    opt(e.gap_d_j),
                    e.lambda_norm,
                    e.cut_origin.map(|o| o.as_str()).unwrap_or(""),
                ));
            }
        }
        out
    }

    pub fn time_to_gap(&self, targets: &[f64]) -> Vec<TimeToGap> {
        let best = self.best_dual();
        self.runs
            .iter()
            .map(|r| {
                let curve: Vec<(f64, f64)> = r
                    .trace
                    .events
                    .iter()
                    .filter_map(|e| e.mu.map(|m| (e.wall_ms, super::bench::relative_gap(best, m).abs())))
                    .collect();
                TimeToGap {
                    name: r.name.clone(),
                    targets: targets.to_vec(),
                    times_ms: targets.iter().map(|&t| time_to_gap(&curve, t)).collect(),
                }
            })
            .collect()
    }
}

/// First time at which `gap <= target` on a `(time, gap)` curve.
pub fn time_to_gap(curve: &[(f64, f64)], target: f64) -> Option<f64> {
    curve.iter().find(|(_, g)| *g <= target).map(|(t, _)| *t)
}

/// Geometric mean and geometric standard deviation of positive values.
pub fn geometric_stats(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let n = values.len() as f64;
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    Some((mean.exp(), var.sqrt().exp()))
}
