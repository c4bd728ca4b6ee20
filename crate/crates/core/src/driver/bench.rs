//! Frozen-pool experiments: repeated max-violation cuts against masters of
//! varying aggregation, all measured as time versus gap to the best bound.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristics;
use crate::master::{self, CutPool, MasterOptions, Partition};

/// Signed relative distance of `bound` below `best`.
pub fn relative_gap(best: f64, bound: f64) -> f64 {
    if best == 0.0 {
        best - bound
    } else {
        (best - bound) / best.abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointRun {
    /// `(cumulative ms, bound)` after the initial solve and after each application.
    pub points: Vec<(f64, f64)>,
    pub applications: usize,
    /// Whether the last max-violation cut was no longer violated.
    pub converged: bool,
    pub bound: f64,
    pub lambda: Vec<f64>,
}

/// Applies max-violation cuts with aggregated re-solves until no pooled
/// combination separates the current master solution, or `max_applications`.
pub fn max_violation_fixed_point(
    pool: &CutPool,
    max_applications: usize,
    opts: &MasterOptions,
) -> Result<FixedPointRun> {
    let mut pool = pool.clone();
    let started = Instant::now();
    let mut sol = master::solve_aggregated_with(&pool, opts)?;
    let mut points = vec![(started.elapsed().as_secs_f64() * 1e3, sol.mu)];
    let mut applications = 0;
    let mut converged = false;
    loop {
        let out = heuristics::max_violation_cut(&pool, &sol.lambda, sol.mu)?;
        if out.violation <= 1e-9 * sol.mu.abs().max(1.0) {
            converged = true;
            break;
        }
        if applications == max_applications {
            break;
        }
        pool.add_selection(out.selection, out.origin)?;
        sol = master::solve_aggregated_with(&pool, opts)?;
        if !sol.is_optimal() {
            return Err(Error::Numerical(format!("master ended with {:?}", sol.status)));
        }
        applications += 1;
        points.push((started.elapsed().as_secs_f64() * 1e3, sol.mu));
    }
    Ok(FixedPointRun { points, applications, converged, bound: sol.mu, lambda: sol.lambda })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub groups: usize,
    pub elapsed_ms: f64,
    pub bound: f64,
    pub rows: usize,
}

/// Solves the grouped master once per requested group count.
pub fn partial_levels(pool: &CutPool, levels: &[usize], seed: u64, opts: &MasterOptions) -> Result<Vec<LevelResult>> {
    levels
        .iter()
        .map(|&m| {
            let partition = Partition::random(pool.num_articles(), m, seed)?;
            let t = Instant::now();
            let sol = master::solve_grouped(pool, &partition, opts)?;
            Ok(LevelResult { groups: m, elapsed_ms: t.elapsed().as_secs_f64() * 1e3, bound: sol.mu, rows: sol.num_rows })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub mode: String,
    pub label: String,
    pub elapsed_ms: f64,
    pub bound: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub best_bound: f64,
    /// "disaggregated" or "tightest-achieved".
    pub best_source: String,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,label,elapsed_ms,bound,gap\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},{}\n", r.mode, r.label, r.elapsed_ms, r.bound, r.gap));
        }
        out
    }
}

/// What to replay on a frozen pool.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BenchMode {
    Heuristic,
    Partial(Vec<usize>),
}

impl std::str::FromStr for BenchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "heuristic" {
            return Ok(BenchMode::Heuristic);
        }
        let list = s
            .strip_prefix("partial:")
            .ok_or_else(|| Error::InvalidInput(format!("unknown bench mode '{s}'")))?;
        let levels = list
            .split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|_| Error::InvalidInput(format!("bad group count '{x}'"))))
            .collect::<Result<Vec<_>>>()?;
        if levels.is_empty() {
            return Err(Error::InvalidInput("empty group count list".into()));
        }
        Ok(BenchMode::Partial(levels))
    }
}

/// Runs one bench mode and measures gaps against the disaggregated bound when
/// it fits under the row cap, else against the tightest bound achieved.
pub fn bench_pool(pool: &CutPool, mode: &BenchMode, seed: u64, opts: &MasterOptions) -> Result<BenchReport> {
    let reference = match master::solve_disaggregated_with(pool, opts) {
        Ok(s) => Some(s.mu),
        Err(Error::MasterTooLarge { .. }) => None,
        Err(e) => return Err(e),
    };
    let (mode_name, raw): (&str, Vec<(String, f64, f64)>) = match mode {
        BenchMode::Heuristic => {
            let j = pool.len();
            let run = max_violation_fixed_point(pool, 10 * j * j, opts)?;
            let rows = run.points.iter().enumerate().map(|(k, &(t, b))| (k.to_string(), t, b)).collect();
            ("heuristic", rows)
        }
        BenchMode::Partial(levels) => {
            let res = partial_levels(pool, levels, seed, opts)?;
            ("partial", res.into_iter().map(|r| (r.groups.to_string(), r.elapsed_ms, r.bound)).collect())
        }
    };
    let (best_bound, best_source) = match reference {
        Some(b) => (b, "disaggregated"),
        None => (raw.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max), "tightest-achieved"),
    };
    let rows = raw
        .into_iter()
        .map(|(label, elapsed_ms, bound)| BenchRow {
            mode: mode_name.into(),
            label,
            elapsed_ms,
            bound,
            gap: relative_gap(best_bound, bound),
        })
        .collect();
    Ok(BenchReport { best_bound, best_source: best_source.into(), rows })
}
