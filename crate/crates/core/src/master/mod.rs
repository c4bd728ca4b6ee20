//! Cutting-plane master problems over a [`CutPool`].
//!
//! With `r_k = b - A X^k` and `F_k = f(X^k)`, the aggregated master is
//!
//! ```text
//! min mu  s.t.  mu + r_k^T lambda >= F_k  (all k),  0 <= lambda <= lambda_bar
//! ```
//!
//! The grouped variants carry one epigraph variable per article group and
//! minimize `sum_g nu_g - lambda^T b`. Every formulation reports its optimal
//! objective as `mu`, which is a lower bound on `min_lambda LR(lambda)`.

mod pool;
pub mod simplex;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use pool::{Cut, CutOrigin, CutPool, DumpCut, DumpEntry, PoolDump, PoolEntry, DUMP_FORMAT};
use simplex::{LinearProgram, LpStatus, RowKind, SimplexOptions};

use crate::error::{Error, Result};

/// Default cap on master LP rows.
pub const DEFAULT_ROW_CAP: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MasterStatus {
    Optimal,
    InfeasibleDetected,
    IterationLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MasterSolution {
    pub mu: f64,
    pub lambda: Vec<f64>,
    pub objective_value: f64,
    pub active_cut_indices: Vec<usize>,
    pub status: MasterStatus,
    pub iterations: usize,
    pub bland_engaged: bool,
    pub num_rows: usize,
    pub num_vars: usize,
}

impl MasterSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == MasterStatus::Optimal
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MasterOptions {
    pub simplex: SimplexOptions,
    pub row_cap: usize,
}

impl Default for MasterOptions {
    fn default() -> Self {
        Self { simplex: SimplexOptions::default(), row_cap: DEFAULT_ROW_CAP }
    }
}

/// A split of the articles into disjoint groups.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    groups: Vec<Vec<usize>>,
}

impl Partition {
    /// Seeded shuffle cut into `m` contiguous near-equal chunks.
    ///
    /// Group boundaries sit at `floor(g * n / m)`, so for one seed the
    /// partition into `k * m` groups refines the one into `m` groups.
    pub fn random(n: usize, m: usize, seed: u64) -> Result<Self> {
        if m == 0 || m > n {
            return Err(Error::InvalidInput(format!("group count {m} must lie in 1..={n}")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let groups = (0..m)
            .map(|g| {
                let mut grp = order[g * n / m..(g + 1) * n / m].to_vec();
                grp.sort_unstable();
                grp
            })
            .collect();
        Ok(Self { groups })
    }

    pub fn single(n: usize) -> Self {
        Self { groups: vec![(0..n).collect()] }
    }

    pub fn singletons(n: usize) -> Self {
        Self { groups: (0..n).map(|i| vec![i]).collect() }
    }

    pub fn from_groups(groups: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::InvalidInput("empty article group".into()));
            }
            for &i in g {
                if i >= n || seen[i] {
                    return Err(Error::InvalidInput(format!("article {i} missing or repeated in partition")));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidInput("partition does not cover every article".into()));
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Whether every group of `self` lies inside one group of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        let mut owner = HashMap::new();
        for (g, grp) in coarser.groups.iter().enumerate() {
            for &i in grp {
                owner.insert(i, g);
            }
        }
        self.groups.iter().all(|grp| {
            let first = owner.get(&grp[0]);
            first.is_some() && grp.iter().all(|i| owner.get(i) == first)
        })
    }
}

pub fn solve_aggregated(pool: &CutPool) -> Result<MasterSolution> {
    solve_aggregated_with(pool, &MasterOptions::default())
}

pub fn solve_aggregated_with(pool: &CutPool, opts: &MasterOptions) -> Result<MasterSolution> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if pool.len() > opts.row_cap {
        return Err(Error::MasterTooLarge { rows: pool.len(), cap: opts.row_cap });
    }
    let l = pool.num_constraints();
    let mut lp = LinearProgram::new();
    lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
    for _ in 0..l {
        lp.add_var(0.0, 0.0, pool.lambda_bar());
    }
    for cut in pool.cuts() {
        let mut row = Vec::with_capacity(l + 1);
        row.push(1.0);
        row.extend_from_slice(&cut.residual);
        lp.add_row(row, RowKind::Ge, cut.total_profit);
    }
    let mut start = vec![0.0; l + 1];
    start[0] = pool.max_profit();
    lp.start = Some(start);
    debug_assert_eq!(lp.num_vars(), l + 1);
    debug_assert_eq!(lp.num_rows(), pool.len());

    let sol = simplex::solve_with(&lp, &opts.simplex);
    let status = map_status(sol.status, &sol.diagnostics)?;
    let lambda = clamp_lambda(&sol.x[1..], pool.lambda_bar());
    finish(pool, sol.x[0], lambda, status, &sol, &lp)
}

pub fn solve_disaggregated(pool: &CutPool) -> Result<MasterSolution> {
    solve_disaggregated_with(pool, &MasterOptions::default())
}

pub fn solve_disaggregated_with(pool: &CutPool, opts: &MasterOptions) -> Result<MasterSolution> {
    solve_grouped(pool, &Partition::singletons(pool.num_articles()), opts)
}

/// Partially aggregated master over a seeded partition into `m` groups.
pub fn solve_partially_aggregated(pool: &CutPool, m: usize, seed: u64) -> Result<MasterSolution> {
    let partition = Partition::random(pool.num_articles(), m, seed)?;
    solve_grouped(pool, &partition, &MasterOptions::default())
}

/// Master with one epigraph variable per group of `partition`.
pub fn solve_grouped(pool: &CutPool, partition: &Partition, opts: &MasterOptions) -> Result<MasterSolution> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let n = pool.num_articles();
    let l = pool.num_constraints();
    if partition.groups().iter().flatten().any(|&i| i >= n) {
        return Err(Error::InvalidInput("partition references a missing article".into()));
    }

    // distinct (f_g, A_g x_g) per group, in order of first appearance
    let mut group_rows: Vec<Vec<(f64, Vec<f64>)>> = Vec::with_capacity(partition.len());
    let mut total_rows = 0;
    for grp in partition.groups() {
        let mut seen: HashMap<Vec<usize>, ()> = HashMap::new();
        let mut rows = Vec::new();
        for cut in pool.cuts() {
            let key: Vec<usize> = grp.iter().map(|&i| cut.selection[i]).collect();
            if seen.insert(key.clone(), ()).is_some() {
                continue;
            }
            let mut profit = 0.0;
            let mut contrib = vec![0.0; l];
            for (&i, &e) in grp.iter().zip(&key) {
                let entry = &pool.entries(i)[e];
                profit += entry.profit;
                for (t, v) in contrib.iter_mut().zip(&entry.contributions) {
                    *t += v;
                }
            }
            rows.push((profit, contrib));
        }
        total_rows += rows.len();
        if total_rows > opts.row_cap {
            return Err(Error::MasterTooLarge { rows: grouped_row_count(pool, partition), cap: opts.row_cap });
        }
        group_rows.push(rows);
    }

    let mut lp = LinearProgram::new();
    for b in pool.rhs() {
        lp.add_var(-b, 0.0, pool.lambda_bar());
    }
    let nu0 = l;
    for _ in partition.groups() {
        lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
    }
    let nvars = l + partition.len();
    let mut start = vec![0.0; nvars];
    for (g, rows) in group_rows.iter().enumerate() {
        start[nu0 + g] = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
        for (profit, contrib) in rows {
            let mut row = vec![0.0; nvars];
            for (k, c) in contrib.iter().enumerate() {
                row[k] = -c;
            }
            row[nu0 + g] = 1.0;
            lp.add_row(row, RowKind::Ge, *profit);
        }
    }
    lp.start = Some(start);

    let sol = simplex::solve_with(&lp, &opts.simplex);
    let status = map_status(sol.status, &sol.diagnostics)?;
    let lambda = clamp_lambda(&sol.x[..l], pool.lambda_bar());
    let nu_sum = sol.x[nu0..].iter().fold(0.0, |a, v| a + v);
    let mu = nu_sum - crate::model::dot(&lambda, pool.rhs());
    finish(pool, mu, lambda, status, &sol, &lp)
}

/// Rows the grouped master would have, without building it.
pub fn grouped_row_count(pool: &CutPool, partition: &Partition) -> usize {
    partition
        .groups()
        .iter()
        .map(|grp| {
            let mut seen = std::collections::HashSet::new();
            for cut in pool.cuts() {
                seen.insert(grp.iter().map(|&i| cut.selection[i]).collect::<Vec<_>>());
            }
            seen.len()
        })
        .sum()
}

fn map_status(status: LpStatus, diag: &Option<String>) -> Result<MasterStatus> {
    match status {
        LpStatus::Optimal => Ok(MasterStatus::Optimal),
        LpStatus::Infeasible => Ok(MasterStatus::InfeasibleDetected),
        LpStatus::IterationLimit => Ok(MasterStatus::IterationLimit),
        LpStatus::Unbounded => Err(Error::Numerical("master LP reported unbounded".into())),
        LpStatus::NumericalFailure => Err(Error::Numerical(format!(
            "master LP failed: {}",
            diag.as_deref().unwrap_or("no diagnostics")
        ))),
    }
}

fn clamp_lambda(x: &[f64], lambda_bar: f64) -> Vec<f64> {
    // adding 0.0 normalizes -0.0
    x.iter().map(|v| v.clamp(0.0, lambda_bar) + 0.0).collect()
}

fn finish(
    pool: &CutPool,
    mu: f64,
    lambda: Vec<f64>,
    status: MasterStatus,
    sol: &simplex::LpSolution,
    lp: &LinearProgram,
) -> Result<MasterSolution> {
    let tol = 1e-7 * mu.abs().max(1.0);
    let mut active = Vec::new();
    if status == MasterStatus::Optimal {
        for (k, cut) in pool.cuts().iter().enumerate() {
            let v = cut.value_at(&lambda);
            if v > mu + tol {
                return Err(Error::Numerical(format!(
                    "master solution violates cut {k}: mu {mu} < {v}"
                )));
            }
            if v >= mu - tol {
                active.push(k);
            }
        }
    }
    Ok(MasterSolution {
        mu,
        lambda,
        objective_value: mu,
        active_cut_indices: active,
        status,
        iterations: sol.iterations,
        bland_engaged: sol.bland_engaged,
        num_rows: lp.num_rows(),
        num_vars: lp.num_vars(),
    })
}
