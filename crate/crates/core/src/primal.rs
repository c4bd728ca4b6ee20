//! Selection MIP over pooled solutions.
//!
//! Pick one pooled offer per article to maximize `p_bar * f(x) + v_bar^T delta`
//! with `delta_l = min(0, (A x - b)_l)`, so shortfalls on linking constraints
//! are penalized after scaling by their observed range over the pool. Solved
//! by depth-first branch-and-bound with LP relaxation bounds from the master
//! simplex.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::master::simplex::{self, LinearProgram, LpStatus, RowKind};
use crate::master::CutPool;
use crate::model::{residual_magnitude, residual_satisfied, Offer};

/// One selectable offer of an article.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    /// Entry index in the pool's value table.
    pub entry: usize,
    /// Earliest cut whose selection uses this entry.
    pub first_cut: usize,
    pub profit: f64,
    pub contributions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionProblem {
    pub p_bar: f64,
    pub v_bar: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Distinct pooled offers per article, in order of first use.
    pub candidates: Vec<Vec<Candidate>>,
    /// Candidate index per article for every pooled cut.
    pub cut_choices: Vec<Vec<usize>>,
}

/// Builds the scaled selection problem from pool statistics.
pub fn build_selection(pool: &CutPool) -> Result<SelectionProblem> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let max_f = pool.max_profit();
    let p_bar = if max_f > 0.0 { 1.0 / max_f } else { 1.0 };
    let v_bar = pool
        .max_excess()
        .iter()
        .zip(pool.min_excess())
        .map(|(hi, lo)| {
            let range = hi - lo;
            let scale = hi.abs().max(lo.abs()).max(1.0);
            if range > 1e-12 * scale {
                1.0 / range
            } else {
                1.0
            }
        })
        .collect();
    let n = pool.num_articles();
    let mut candidates: Vec<Vec<Candidate>> = vec![Vec::new(); n];
    let mut slot: Vec<Vec<Option<usize>>> = (0..n).map(|i| vec![None; pool.entries(i).len()]).collect();
    let mut cut_choices = Vec::with_capacity(pool.len());
    for (k, cut) in pool.cuts().iter().enumerate() {
        let choice = (0..n)
            .map(|i| {
                let e = cut.selection[i];
                *slot[i][e].get_or_insert_with(|| {
                    let entry = &pool.entries(i)[e];
                    candidates[i].push(Candidate {
                        entry: e,
                        first_cut: k,
                        profit: entry.profit,
                        contributions: entry.contributions.clone(),
                    });
                    candidates[i].len() - 1
                })
            })
            .collect();
        cut_choices.push(choice);
    }
    Ok(SelectionProblem { p_bar, v_bar, rhs: pool.rhs().to_vec(), candidates, cut_choices })
}

impl SelectionProblem {
    pub fn num_articles(&self) -> usize {
        self.candidates.len()
    }

    /// Profit and `A x` of a choice (candidate index per article), summed in article order.
    pub fn totals(&self, choice: &[usize]) -> (f64, Vec<f64>) {
        let mut profit = 0.0;
        let mut ax = vec![0.0; self.rhs.len()];
        for (i, &c) in choice.iter().enumerate() {
            let cand = &self.candidates[i][c];
            profit += cand.profit;
            for (t, v) in ax.iter_mut().zip(&cand.contributions) {
                *t += v;
            }
        }
        (profit, ax)
    }

    /// `p_bar f(x) + v_bar^T delta` from already summed totals.
    pub fn score(&self, profit: f64, ax: &[f64]) -> f64 {
        let penalty = self
            .v_bar
            .iter()
            .zip(ax.iter().zip(&self.rhs))
            .fold(0.0, |acc, (v, (a, b))| acc + v * (a - b).min(0.0));
        self.p_bar * profit + penalty
    }

    pub fn objective(&self, choice: &[usize]) -> f64 {
        let (profit, ax) = self.totals(choice);
        self.score(profit, &ax)
    }

    /// Best pure pooled cut, earliest on ties.
    pub fn best_pure(&self) -> (Vec<usize>, f64) {
        let mut best = 0;
        let mut best_obj = f64::NEG_INFINITY;
        for (k, choice) in self.cut_choices.iter().enumerate() {
            let obj = self.objective(choice);
            if obj > best_obj {
                best_obj = obj;
                best = k;
            }
        }
        (self.cut_choices[best].clone(), best_obj)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrimalOptions {
    pub node_limit: usize,
    pub time_limit: Duration,
    /// Nodes whose bound exceeds the incumbent by at most this fraction of
    /// `max(1, |incumbent|)` are pruned; 0 searches to exact optimality.
    pub relative_gap: f64,
}

impl Default for PrimalOptions {
    fn default() -> Self {
        Self { node_limit: 1_000, time_limit: Duration::from_secs(10), relative_gap: 1e-3 }
    }
}

impl PrimalOptions {
    /// Pruning only at numerical precision, with generous limits.
    pub fn exact() -> Self {
        Self { node_limit: 10_000_000, time_limit: Duration::from_secs(600), relative_gap: 0.0 }
    }
}

/// Raw branch-and-bound result in candidate indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionResult {
    pub choice: Vec<usize>,
    pub objective: f64,
    pub proof_gap: f64,
    pub nodes: usize,
    pub limit: Option<&'static str>,
}

/// Depth-first branch-and-bound over the selection problem.
pub fn solve_selection(problem: &SelectionProblem, opts: &PrimalOptions) -> Result<SelectionResult> {
    if opts.node_limit == 0 || opts.time_limit.is_zero() {
        return Err(Error::InvalidInput("primal limits must be positive".into()));
    }
    if !(opts.relative_gap >= 0.0 && opts.relative_gap.is_finite()) {
        return Err(Error::InvalidInput("primal gap tolerance must be finite and non-negative".into()));
    }
    if problem.cut_choices.is_empty() || problem.candidates.iter().any(|c| c.is_empty()) {
        return Err(Error::EmptyPool);
    }
    let (best, best_obj) = problem.best_pure();
    let active = undominated(problem);
    let mut search = Search {
        problem,
        active: &active,
        opts,
        started: Instant::now(),
        nodes: 0,
        best,
        best_obj,
        limit: None,
        open_bound: f64::NEG_INFINITY,
    };
    // articles with a single candidate are fixed from the start
    let mut fixed: Vec<Option<usize>> = active.iter().map(|a| if a.len() == 1 { Some(a[0]) } else { None }).collect();
    search.node(&mut fixed, f64::INFINITY);
    let proof_gap = (search.open_bound - search.best_obj).max(0.0);
    Ok(SelectionResult {
        choice: search.best,
        objective: search.best_obj,
        proof_gap,
        nodes: search.nodes,
        limit: search.limit,
    })
}

/// Candidates per article not dominated by another one with at least the
/// same profit and contributions; dropping the others never lowers the
/// optimum since the score is monotone in both.
fn undominated(problem: &SelectionProblem) -> Vec<Vec<usize>> {
    problem
        .candidates
        .iter()
        .map(|cands| {
            (0..cands.len())
                .filter(|&c| {
                    let a = &cands[c];
                    !cands.iter().enumerate().any(|(d, b)| {
                        d != c
                            && b.profit >= a.profit
                            && b.contributions.iter().zip(&a.contributions).all(|(x, y)| x >= y)
                            && (d < c
                                || b.profit > a.profit
                                || b.contributions.iter().zip(&a.contributions).any(|(x, y)| x > y))
                    })
                })
                .collect()
        })
        .collect()
}

struct Search<'a> {
    problem: &'a SelectionProblem,
    active: &'a [Vec<usize>],
    opts: &'a PrimalOptions,
    started: Instant,
    nodes: usize,
    best: Vec<usize>,
    best_obj: f64,
    limit: Option<&'static str>,
    open_bound: f64,
}

impl Search<'_> {
    fn offer(&mut self, choice: Vec<usize>) {
        let (profit, ax) = self.problem.totals(&choice);
        let obj = self.problem.score(profit, &ax);
        if obj > self.best_obj {
            self.best_obj = obj;
            self.best = choice;
        }
    }

    fn node(&mut self, fixed: &mut Vec<Option<usize>>, parent_bound: f64) {
        if self.limit.is_none() {
            if self.nodes >= self.opts.node_limit {
                self.limit = Some("node");
            } else if self.started.elapsed() > self.opts.time_limit {
                self.limit = Some("time");
            }
        }
        if self.limit.is_some() {
            self.open_bound = self.open_bound.max(parent_bound);
            return;
        }
        self.nodes += 1;

        if fixed.iter().all(Option::is_some) {
            self.offer(fixed.iter().map(|c| c.unwrap()).collect());
            return;
        }

        let relaxation = self.relax(fixed);
        let bound = relaxation.as_ref().map_or(parent_bound, |r| r.bound);
        let scale = self.best_obj.abs().max(1.0);
        if bound <= self.best_obj + 1e-11 * scale {
            return;
        }
        if bound <= self.best_obj + self.opts.relative_gap * scale {
            // pruned by tolerance, so the bound stays open
            self.open_bound = self.open_bound.max(bound);
            return;
        }

        let mut branch = None;
        if let Some(r) = &relaxation {
            // round to the largest weight per article
            let mut integral = true;
            let mut most_fractional = (f64::INFINITY, 0);
            let choice: Vec<usize> = fixed
                .iter()
                .enumerate()
                .map(|(i, f)| match f {
                    Some(c) => *c,
                    None => {
                        let ys = &r.y[i];
                        let (arg, top) = ys.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (c, &y)| {
                            if y > acc.1 {
                                (c, y)
                            } else {
                                acc
                            }
                        });
                        if top < 1.0 - 1e-9 {
                            integral = false;
                            if top < most_fractional.0 {
                                most_fractional = (top, i);
                            }
                        }
                        self.active[i][arg]
                    }
                })
                .collect();
            self.offer(choice);
            if integral {
                return;
            }
            branch = Some(most_fractional.1);
        }
        let i = branch.unwrap_or_else(|| fixed.iter().position(Option::is_none).unwrap());

        let mut order: Vec<usize> = self.active[i].clone();
        let cands = &self.problem.candidates[i];
        order.sort_by(|&a, &b| cands[b].profit.total_cmp(&cands[a].profit));
        for c in order {
            fixed[i] = Some(c);
            self.node(fixed, bound);
        }
        fixed[i] = None;
    }

    /// LP relaxation with the free articles' choices relaxed to `[0, 1]`.
    fn relax(&self, fixed: &[Option<usize>]) -> Option<Relaxation> {
        let p = self.problem;
        let l = p.rhs.len();
        let mut base_profit = 0.0;
        let mut base_ax = vec![0.0; l];
        let mut cols: Vec<(usize, usize)> = Vec::new();
        for (i, f) in fixed.iter().enumerate() {
            match f {
                Some(c) => {
                    let cand = &p.candidates[i][*c];
                    base_profit += cand.profit;
                    for (t, v) in base_ax.iter_mut().zip(&cand.contributions) {
                        *t += v;
                    }
                }
                None => cols.extend(self.active[i].iter().map(|&c| (i, c))),
            }
        }
        let nv = cols.len() + l;
        let mut lp = LinearProgram::new();
        let mut start = vec![0.0; nv];
        let mut first_of: Vec<Option<usize>> = vec![None; fixed.len()];
        for (j, &(i, c)) in cols.iter().enumerate() {
            lp.add_var(-p.p_bar * p.candidates[i][c].profit, 0.0, 1.0);
            if first_of[i].is_none() {
                first_of[i] = Some(j);
                start[j] = 1.0;
            }
        }
        for v in &p.v_bar {
            lp.add_var(-v, f64::NEG_INFINITY, 0.0);
        }
        for ell in 0..l {
            let mut row = vec![0.0; nv];
            for (j, &(i, c)) in cols.iter().enumerate() {
                row[j] = p.candidates[i][c].contributions[ell];
            }
            row[cols.len() + ell] = -1.0;
            lp.add_row(row, RowKind::Ge, p.rhs[ell] - base_ax[ell]);
        }
        for (i, f) in fixed.iter().enumerate() {
            if f.is_none() {
                let mut row = vec![0.0; nv];
                for (j, &(a, _)) in cols.iter().enumerate() {
                    if a == i {
                        row[j] = 1.0;
                    }
                }
                lp.add_row(row, RowKind::Eq, 1.0);
            }
        }
        lp.start = Some(start);
        let sol = simplex::solve(&lp);
        if sol.status != LpStatus::Optimal {
            log::debug!("selection relaxation ended with {:?}", sol.status);
            return None;
        }
        let mut y: Vec<Vec<f64>> = fixed.iter().map(|_| Vec::new()).collect();
        let mut profit = base_profit;
        let mut ax = base_ax;
        for (j, &(i, c)) in cols.iter().enumerate() {
            let v = sol.x[j].clamp(0.0, 1.0);
            y[i].push(v);
            let cand = &p.candidates[i][c];
            profit += v * cand.profit;
            for (t, a) in ax.iter_mut().zip(&cand.contributions) {
                *t += v * a;
            }
        }
        // the LP objective is the score evaluated at the fractional point
        let bound = p.score(profit, &ax).max(-sol.objective + p.p_bar * base_profit);
        Some(Relaxation { bound, y })
    }
}

struct Relaxation {
    bound: f64,
    y: Vec<Vec<f64>>,
}

/// Exhaustive search over one pooled cut index per article; the first
/// selection in lexicographic order attaining the maximum wins.
pub fn enumerate_selection(problem: &SelectionProblem, cap: u128) -> Result<(Vec<usize>, f64)> {
    let n = problem.num_articles();
    let j = problem.cut_choices.len();
    let size = (j as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if size > cap {
        return Err(Error::OracleCap { size, cap });
    }
    if j == 0 {
        return Err(Error::EmptyPool);
    }
    let mut ks = vec![0usize; n];
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    loop {
        let choice: Vec<usize> = ks.iter().enumerate().map(|(i, &k)| problem.cut_choices[k][i]).collect();
        let obj = problem.objective(&choice);
        if obj > best.1 {
            best = (choice, obj);
        }
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(best);
            }
            pos -= 1;
            ks[pos] += 1;
            if ks[pos] < j {
                break;
            }
            ks[pos] = 0;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimalSolution {
    /// Pooled cut index `k_i` per article.
    pub selection: Vec<usize>,
    /// Pool entry index per article.
    pub entries: Vec<usize>,
    pub objective: f64,
    pub profit: f64,
    /// `A x - b`.
    pub excess: Vec<f64>,
    /// `min(0, A x - b)`.
    pub delta: Vec<f64>,
    /// `max(0, b - A x)`.
    pub violation: Vec<f64>,
    pub feasible: bool,
    /// Best remaining bound minus the incumbent objective.
    pub proof_gap: f64,
    pub nodes: usize,
    /// Which limit stopped the search, if any.
    pub limit: Option<String>,
    #[serde(skip)]
    pub offers: Option<Vec<Offer>>,
}

impl PrimalSolution {
    pub fn hit_limit(&self) -> bool {
        self.limit.is_some()
    }
}

/// Builds and solves the selection problem of `pool`.
pub fn solve_primal(pool: &CutPool, opts: &PrimalOptions) -> Result<PrimalSolution> {
    let problem = build_selection(pool)?;
    let r = solve_selection(&problem, opts)?;
    Ok(to_solution(pool, &problem, &r))
}

pub fn to_solution(pool: &CutPool, problem: &SelectionProblem, r: &SelectionResult) -> PrimalSolution {
    let entries: Vec<usize> = r.choice.iter().enumerate().map(|(i, &c)| problem.candidates[i][c].entry).collect();
    let selection = r.choice.iter().enumerate().map(|(i, &c)| problem.candidates[i][c].first_cut).collect();
    let (profit, ax) = pool.totals(&entries);
    let excess: Vec<f64> = ax.iter().zip(pool.rhs()).map(|(a, b)| a - b).collect();
    let delta = excess.iter().map(|e| e.min(0.0)).collect();
    let violation: Vec<f64> = excess.iter().map(|e| (-e).max(0.0)).collect();
    let magnitude = residual_magnitude(
        entries.iter().enumerate().map(|(i, &e)| pool.entries(i)[e].contributions.as_slice()),
        pool.rhs(),
    );
    let feasible = excess.iter().zip(&magnitude).all(|(e, m)| residual_satisfied(-e, *m));
    PrimalSolution {
        selection,
        offers: pool.offers(&entries),
        entries,
        objective: r.objective,
        profit,
        excess,
        delta,
        violation,
        feasible,
        proof_gap: r.proof_gap,
        nodes: r.nodes,
        limit: r.limit.map(str::to_string),
    }
}
