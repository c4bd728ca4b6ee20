//! The extended cutting-plane loop.
//!
//! Each outer iteration evaluates `LR(lambda)` exactly, adds the maximizer as
//! a cut and re-solves the master. An inner loop then adds heuristic cuts
//! built from pooled offers until the gap closes, the multipliers stop
//! moving, or a cut's efficacy drops below `tol_e`. The final pool feeds the
//! selection MIP.

pub mod bench;
pub mod compare;
mod trace;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use trace::{gap_alg1, gap_closed, gap_d_j, EventKind, RunTrace, TraceEvent};

use crate::error::{Error, Result};
use crate::heuristics::{self, HeuristicOutcome};
use crate::master::{self, CutOrigin, CutPool, MasterOptions, MasterSolution, Partition};
use crate::model::{dot, Instance};
use crate::primal::{self, PrimalOptions, PrimalSolution};
use crate::subproblem::{SubproblemSolver, DEFAULT_PATH_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    None,
    Random,
    MaxViolation,
    Feasibility,
    /// Max-violation rounds with one feasibility cut when the gate trips.
    Mixed,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::None, Strategy::Random, Strategy::MaxViolation, Strategy::Feasibility, Strategy::Mixed];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Random => "random",
            Strategy::MaxViolation => "max-violation",
            Strategy::Feasibility => "feasibility",
            Strategy::Mixed => "mixed",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown strategy '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MasterVariant {
    Aggregated,
    Partial(usize),
    Disaggregated,
}

impl fmt::Display for MasterVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MasterVariant::Aggregated => f.write_str("aggregated"),
            MasterVariant::Partial(m) => write!(f, "partial:{m}"),
            MasterVariant::Disaggregated => f.write_str("disaggregated"),
        }
    }
}

impl FromStr for MasterVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aggregated" => Ok(MasterVariant::Aggregated),
            "disaggregated" => Ok(MasterVariant::Disaggregated),
            _ => match s.strip_prefix("partial:").map(str::parse::<usize>) {
                Some(Ok(m)) if m >= 1 => Ok(MasterVariant::Partial(m)),
                _ => Err(Error::InvalidInput(format!("unknown master variant '{s}'"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriverConfig {
    /// Outer iterations (exact evaluations).
    pub outer_limit: usize,
    /// Heuristic cuts per outer iteration.
    pub inner_limit: usize,
    pub tol_mu: f64,
    pub tol_e: f64,
    pub strategy: Strategy,
    pub lambda_bar: Option<f64>,
    pub master: MasterVariant,
    pub seed: u64,
    /// Compare successive multipliers up to this tolerance instead of exactly.
    pub lambda_tolerance: Option<f64>,
    pub primal: PrimalOptions,
    pub master_options: MasterOptions,
    pub path_cap: u128,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            outer_limit: 10,
            inner_limit: 100,
            tol_mu: 1e-6,
            tol_e: 1.0,
            strategy: Strategy::MaxViolation,
            lambda_bar: None,
            master: MasterVariant::Aggregated,
            seed: 0,
            lambda_tolerance: None,
            primal: PrimalOptions::default(),
            master_options: MasterOptions::default(),
            path_cap: DEFAULT_PATH_CAP,
        }
    }
}

impl DriverConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        Self { strategy, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_limit == 0 {
            return Err(Error::InvalidInput("outer iteration limit must be at least 1".into()));
        }
        if !(self.tol_mu > 0.0 && self.tol_e > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if let Some(lb) = self.lambda_bar {
            if !(lb.is_finite() && lb > 0.0) {
                return Err(Error::InvalidInput(format!("lambda_bar must be positive, got {lb}")));
            }
        }
        if let Some(t) = self.lambda_tolerance {
            if !(t >= 0.0) {
                return Err(Error::InvalidInput("lambda tolerance must be non-negative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    IterationLimit,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub lr_ms: f64,
    pub master_ms: f64,
    pub heuristic_ms: f64,
    pub primal_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub dual_bound: f64,
    pub mu: f64,
    pub gap_alg1: Option<f64>,
    pub gap_d_j: Option<f64>,
    pub outer_iterations: usize,
    pub exact_evaluations: usize,
    pub heuristic_cuts: usize,
    pub master_solves: usize,
    pub pool_size: usize,
    pub distinct_cuts: usize,
    pub lambda_bar: f64,
    pub lambda: Vec<f64>,
    /// Multipliers of the best exact evaluation.
    pub best_lambda: Vec<f64>,
    pub primal_objective: f64,
    pub primal_profit: f64,
    pub primal_feasible: bool,
    pub primal_proof_gap: f64,
    pub primal_limit: Option<String>,
    pub wall_ms: f64,
    pub timings: Timings,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub primal: PrimalSolution,
    pub trace: RunTrace,
    pub summary: RunSummary,
    pub pool: CutPool,
}

/// A run stopped by an error, with the events recorded up to that point.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: Error,
    pub trace: RunTrace,
}

/// Runs the loop without observing intermediate events.
pub fn run(instance: &Instance, config: &DriverConfig) -> std::result::Result<RunOutcome, RunFailure> {
    run_with_observer(instance, config, &mut |_, _| {})
}

/// Runs the loop, calling `observer` after every event with the pool as it
/// stands at that point.
pub fn run_with_observer(
    instance: &Instance,
    config: &DriverConfig,
    observer: &mut dyn FnMut(&TraceEvent, &CutPool),
) -> std::result::Result<RunOutcome, RunFailure> {
    let mut state = match State::new(instance, config) {
        Ok(s) => s,
        Err(error) => return Err(RunFailure { error, trace: RunTrace::default() }),
    };
    match state.execute(observer) {
        Ok(outcome) => Ok(outcome),
        Err(error) => Err(RunFailure { error, trace: std::mem::take(&mut state.trace) }),
    }
}

struct State<'a> {
    config: &'a DriverConfig,
    solver: SubproblemSolver,
    pool: CutPool,
    partition: Option<Partition>,
    trace: RunTrace,
    started: Instant,
    outer: usize,
    dual: f64,
    best_lambda: Vec<f64>,
    mu: Option<f64>,
    lambda: Vec<f64>,
    subproblem_solves: usize,
    exact_evaluations: usize,
    heuristic_cuts: usize,
    master_solves: usize,
    timings: Timings,
}

impl<'a> State<'a> {
    fn new(instance: &Instance, config: &'a DriverConfig) -> Result<Self> {
        config.validate()?;
        instance.validate()?;
        let n = instance.num_articles();
        let partition = match config.master {
            MasterVariant::Aggregated => None,
            MasterVariant::Disaggregated => Some(Partition::singletons(n)),
            MasterVariant::Partial(m) => Some(Partition::random(n, m, config.seed)?),
        };
        let solver = SubproblemSolver::with_cap(instance, config.path_cap)?;
        let mut pool = CutPool::for_instance(instance);
        if let Some(lb) = config.lambda_bar {
            pool.set_lambda_bar(lb);
        }
        let l = instance.num_constraints();
        Ok(Self {
            config,
            solver,
            pool,
            partition,
            trace: RunTrace::default(),
            started: Instant::now(),
            outer: 0,
            dual: f64::INFINITY,
            best_lambda: vec![0.0; l],
            mu: None,
            lambda: vec![0.0; l],
            subproblem_solves: 0,
            exact_evaluations: 0,
            heuristic_cuts: 0,
            master_solves: 0,
            timings: Timings::default(),
        })
    }

    fn elapsed_ms(&self) -> f64 {
        self.started.elapsed().as_secs_f64() * 1e3
    }

    fn emit(
        &mut self,
        event: EventKind,
        observer: &mut dyn FnMut(&TraceEvent, &CutPool),
        extra: impl FnOnce(&mut TraceEvent),
    ) {
        let lambda_bar = self.pool.lambda_bar();
        let mut ev = TraceEvent {
            seq: self.trace.events.len(),
            outer: self.outer,
            j: self.pool.len(),
            event,
            dual_bound: self.dual,
            mu: self.mu,
            gap_alg1: self.mu.and_then(|m| gap_alg1(self.dual, m)),
            gap_d_j: self.mu.and_then(|m| gap_d_j(self.dual, m)),
            lambda_norm: dot(&self.lambda, &self.lambda).sqrt(),
            lambda_at_bar: self.lambda.iter().filter(|&&v| v == lambda_bar).count(),
            wall_ms: self.elapsed_ms(),
            subproblem_solves: self.subproblem_solves,
            cut_origin: None,
            lr_value: None,
            efficacy: None,
            note: None,
            lambda: (event == EventKind::MasterSolve).then(|| self.lambda.clone()),
        };
        extra(&mut ev);
        observer(&ev, &self.pool);
        self.trace.events.push(ev);
    }

    fn solve_master(&mut self) -> Result<MasterSolution> {
        let t = Instant::now();
        let sol = match &self.partition {
            None => master::solve_aggregated_with(&self.pool, &self.config.master_options),
            Some(p) => master::solve_grouped(&self.pool, p, &self.config.master_options),
        }?;
        self.timings.master_ms += t.elapsed().as_secs_f64() * 1e3;
        self.master_solves += 1;
        if !sol.is_optimal() {
            return Err(Error::Numerical(format!("master solve ended with status {:?}", sol.status)));
        }
        // the master optimum never exceeds an exact relaxation value
        let scale = self.dual.abs().max(1.0);
        if sol.mu > self.dual + 1e-7 * scale {
            return Err(Error::InvalidCut { mu: sol.mu, dual: self.dual });
        }
        if let Some(prev) = self.mu {
            if sol.mu < prev - 1e-9 * prev.abs().max(1.0) {
                log::warn!("relaxed primal bound decreased from {prev} to {}", sol.mu);
            }
        }
        Ok(sol)
    }

    fn lambda_unchanged(&self, new: &[f64]) -> bool {
        match self.config.lambda_tolerance {
            None => new == self.lambda.as_slice(),
            Some(tol) => new.iter().zip(&self.lambda).all(|(a, b)| (a - b).abs() <= tol * (1.0 + b.abs())),
        }
    }

    fn execute(&mut self, observer: &mut dyn FnMut(&TraceEvent, &CutPool)) -> Result<RunOutcome> {
        let cfg = self.config;
        let mut status = RunStatus::IterationLimit;
        'outer: for outer in 1..=cfg.outer_limit {
            self.outer = outer;

            let t = Instant::now();
            let eval = self.solver.evaluate_lr(&self.lambda)?;
            self.timings.lr_ms += t.elapsed().as_secs_f64() * 1e3;
            self.subproblem_solves += self.solver.num_articles();
            self.exact_evaluations += 1;
            if eval.value < self.dual {
                self.dual = eval.value;
                self.best_lambda = self.lambda.clone();
            }
            self.pool.add_cut(&eval.offers, CutOrigin::ExactLr)?;
            let lr = eval.value;
            self.emit(EventKind::ExactLr, observer, |e| {
                e.cut_origin = Some(CutOrigin::ExactLr);
                e.lr_value = Some(lr);
            });

            let sol = self.solve_master()?;
            self.mu = Some(sol.mu);
            self.lambda = sol.lambda;
            self.emit(EventKind::MasterSolve, observer, |_| {});
            log::info!(
                "outer {outer}: dual {:.6e} mu {:.6e} cuts {}",
                self.dual,
                sol.mu,
                self.pool.len()
            );

            if !gap_closed(self.dual, sol.mu, cfg.tol_mu) {
                self.inner_loop(observer)?;
            }

            if gap_closed(self.dual, self.mu.unwrap(), cfg.tol_mu) {
                status = RunStatus::Converged;
                break 'outer;
            }
        }

        let t = Instant::now();
        let primal = primal::solve_primal(&self.pool, &cfg.primal)?;
        self.timings.primal_ms += t.elapsed().as_secs_f64() * 1e3;
        let pobj = primal.objective;
        self.emit(EventKind::PrimalHeuristic, observer, |e| {
            e.note = Some(format!("objective {pobj}"));
        });
        let note = match status {
            RunStatus::Converged => "converged",
            RunStatus::IterationLimit => "iteration-limit",
        };
        self.emit(EventKind::Stop, observer, |e| e.note = Some(note.into()));

        let mu = self.mu.unwrap_or(f64::NEG_INFINITY);
        let summary = RunSummary {
            status,
            dual_bound: self.dual,
            mu,
            gap_alg1: gap_alg1(self.dual, mu),
            gap_d_j: gap_d_j(self.dual, mu),
            outer_iterations: self.outer,
            exact_evaluations: self.exact_evaluations,
            heuristic_cuts: self.heuristic_cuts,
            master_solves: self.master_solves,
            pool_size: self.pool.len(),
            distinct_cuts: self.pool.num_distinct(),
            lambda_bar: self.pool.lambda_bar(),
            lambda: self.lambda.clone(),
            best_lambda: self.best_lambda.clone(),
            primal_objective: primal.objective,
            primal_profit: primal.profit,
            primal_feasible: primal.feasible,
            primal_proof_gap: primal.proof_gap,
            primal_limit: primal.limit.clone(),
            wall_ms: self.elapsed_ms(),
            timings: self.timings.clone(),
        };
        Ok(RunOutcome { primal, trace: std::mem::take(&mut self.trace), summary, pool: self.pool.clone() })
    }

    fn inner_loop(&mut self, observer: &mut dyn FnMut(&TraceEvent, &CutPool)) -> Result<()> {
        let cfg = self.config;
        if cfg.strategy == Strategy::None {
            return Ok(());
        }
        // distinct-cut count right after the last feasibility cut
        let mut feasibility_mark: Option<usize> = None;
        let mut inject_feasibility = false;
        let mut injected = false;
        for round in 0..cfg.inner_limit {
            let mu = self.mu.expect("master solved before heuristics");
            let kind = match cfg.strategy {
                Strategy::Mixed if inject_feasibility => Strategy::Feasibility,
                Strategy::Mixed => Strategy::MaxViolation,
                s => s,
            };
            inject_feasibility = false;
            if kind == Strategy::Feasibility && feasibility_mark == Some(self.pool.num_distinct()) {
                break;
            }

            let t = Instant::now();
            let outcome = match self.generate(kind, mu, round) {
                Ok(o) => o,
                Err(Error::PrimalLimit(which)) => {
                    self.timings.heuristic_ms += t.elapsed().as_secs_f64() * 1e3;
                    self.emit(EventKind::HeuristicCut, observer, |e| {
                        e.note = Some(format!("feasibility heuristic hit its {which} limit; no cut"));
                    });
                    break;
                }
                Err(e) => return Err(e),
            };
            self.timings.heuristic_ms += t.elapsed().as_secs_f64() * 1e3;

            let dual_before = self.dual;
            self.pool.add_selection(outcome.selection.clone(), outcome.origin)?;
            self.heuristic_cuts += 1;
            if kind == Strategy::Feasibility {
                feasibility_mark = Some(self.pool.num_distinct());
            }
            let (origin, lr, eff) = (outcome.origin, outcome.lr_value, outcome.efficacy);
            self.emit(EventKind::HeuristicCut, observer, |e| {
                e.cut_origin = Some(origin);
                e.lr_value = Some(lr);
                e.efficacy = Some(eff);
            });

            let sol = self.solve_master()?;
            debug_assert_eq!(self.dual, dual_before, "heuristic cuts never move the dual bound");
            let unchanged = self.lambda_unchanged(&sol.lambda);
            self.mu = Some(sol.mu);
            self.lambda = sol.lambda;
            self.emit(EventKind::MasterSolve, observer, |_| {});

            if gap_closed(self.dual, sol.mu, cfg.tol_mu) {
                break;
            }
            if unchanged || outcome.efficacy < cfg.tol_e {
                if cfg.strategy == Strategy::Mixed && kind == Strategy::MaxViolation && !injected {
                    inject_feasibility = true;
                    injected = true;
                    continue;
                }
                break;
            }
        }
        Ok(())
    }

    fn generate(&self, kind: Strategy, mu: f64, round: usize) -> Result<HeuristicOutcome> {
        let round_key = ((self.outer as u64) << 32) | round as u64;
        match kind {
            Strategy::Random => heuristics::random_cut(&self.pool, &self.lambda, mu, self.config.seed, round_key),
            Strategy::MaxViolation => heuristics::max_violation_cut(&self.pool, &self.lambda, mu),
            Strategy::Feasibility => {
                heuristics::feasibility_cut(&self.pool, &self.lambda, mu, &self.config.primal).map(|(o, _)| o)
            }
            Strategy::None | Strategy::Mixed => unreachable!("resolved before generation"),
        }
    }
}
