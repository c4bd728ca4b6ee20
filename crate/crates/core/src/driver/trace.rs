use serde::{Deserialize, Serialize};

use crate::master::CutOrigin;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    ExactLr,
    HeuristicCut,
    MasterSolve,
    PrimalHeuristic,
    Stop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: usize,
    /// Outer iteration, starting at 1.
    pub outer: usize,
    /// Cuts in the pool after the event.
    pub j: usize,
    pub event: EventKind,
    /// `min_k LR(lambda^k)` over exact evaluations so far.
    pub dual_bound: f64,
    pub mu: Option<f64>,
    /// `(dual - mu) / mu`; undefined for `mu <= 0`.
    pub gap_alg1: Option<f64>,
    /// `(dual - mu) / |dual|`; undefined for `dual = 0`.
    pub gap_d_j: Option<f64>,
    pub lambda_norm: f64,
    /// Multipliers sitting at the box bound.
    pub lambda_at_bar: usize,
    pub wall_ms: f64,
    pub subproblem_solves: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_origin: Option<CutOrigin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficacy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Master multipliers, on master solves only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub events: Vec<TraceEvent>,
}

impl RunTrace {
    /// One JSON object per line.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events always serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_ndjson(text: &str) -> serde_json::Result<Self> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<serde_json::Result<_>>()?;
        Ok(Self { events })
    }

    pub fn last_mu(&self) -> Option<f64> {
        self.events.iter().rev().find_map(|e| e.mu)
    }
}

/// `(dual - mu) / mu`, the stopping measure; `None` when `mu <= 0`.
pub fn gap_alg1(dual: f64, mu: f64) -> Option<f64> {
    (mu > 0.0 && dual.is_finite()).then(|| (dual - mu) / mu)
}

/// `(dual - mu) / |dual|`, the reported measure; `None` when `dual = 0`.
pub fn gap_d_j(dual: f64, mu: f64) -> Option<f64> {
    (dual != 0.0 && dual.is_finite()).then(|| (dual - mu) / dual.abs())
}

/// Stopping test: relative gap below `tol`, or absolute gap below
/// `tol * (1 + |dual|)` when the relative gap is undefined.
pub fn gap_closed(dual: f64, mu: f64, tol: f64) -> bool {
    match gap_alg1(dual, mu) {
        Some(g) => g < tol,
        None => dual.is_finite() && dual - mu < tol * (1.0 + dual.abs()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_measures() {
        assert_eq!(gap_alg1(110.0, 100.0), Some(0.1));
        assert_eq!(gap_d_j(100.0, 90.0), Some(0.1));
        assert_eq!(gap_alg1(1.0, 0.0), None);
        assert!(gap_closed(100.0 + 1e-5, 100.0, 1e-6));
        assert!(!gap_closed(100.1, 100.0, 1e-6));
        assert!(gap_closed(-5.0, -5.0 - 1e-7, 1e-6));
        assert!(!gap_closed(-5.0, -6.0, 1e-6));
    }

    #[test]
    fn ndjson_roundtrip() {
        let t = RunTrace {
            events: vec![TraceEvent {
                seq: 0,
                outer: 1,
                j: 1,
                event: EventKind::ExactLr,
                dual_bound: 3.5,
                mu: None,
                gap_alg1: None,
                gap_d_j: None,
                lambda_norm: 0.0,
                lambda_at_bar: 0,
                wall_ms: 0.25,
                subproblem_solves: 4,
                cut_origin: Some(CutOrigin::ExactLr),
                lr_value: Some(3.5),
                efficacy: None,
                note: None,
                lambda: None,
            }],
        };
        let text = t.to_ndjson();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(RunTrace::from_ndjson(&text).unwrap(), t);
    }
}
