//! Heuristic cuts assembled per article from already pooled offers.
//!
//! Any such combination is a point of the feasible set, so its cut is valid
//! for the master without another relaxation evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::master::{CutOrigin, CutPool};
use crate::model::dot;
use crate::primal::{self, PrimalOptions, PrimalSolution};

#[derive(Clone, Debug, PartialEq)]
pub struct HeuristicOutcome {
    pub origin: CutOrigin,
    /// Pooled cut index `k` supplying each article's offer.
    pub source_cuts: Vec<usize>,
    /// Pool entry index per article.
    pub selection: Vec<usize>,
    pub total_profit: f64,
    pub total_contribution: Vec<f64>,
    /// `b - A X`.
    pub residual: Vec<f64>,
    /// `LR(lambda, X)` at the multipliers the cut was built for.
    pub lr_value: f64,
    /// `LR(lambda, X) - mu`.
    pub violation: f64,
    pub efficacy: f64,
}

impl HeuristicOutcome {
    fn from_sources(pool: &CutPool, origin: CutOrigin, source_cuts: Vec<usize>, lambda: &[f64], mu: f64) -> Self {
        let selection: Vec<usize> = source_cuts.iter().enumerate().map(|(i, &k)| pool.cut(k).selection[i]).collect();
        let (total_profit, total_contribution) = pool.totals(&selection);
        let residual: Vec<f64> = pool.rhs().iter().zip(&total_contribution).map(|(b, a)| b - a).collect();
        let lr_value = total_profit - dot(lambda, &residual);
        Self {
            origin,
            source_cuts,
            selection,
            total_profit,
            total_contribution,
            residual,
            lr_value,
            violation: lr_value - mu,
            efficacy: efficacy(lambda, mu, lr_value),
        }
    }

    /// Whether the pool already holds exactly this selection.
    pub fn already_pooled(&self, pool: &CutPool) -> bool {
        pool.find_selection(&self.selection).is_some()
    }
}

/// Cut depth per unit multiplier norm, `(LR(lambda, X) - mu) / ||lambda||_2`.
///
/// At `lambda = 0` the ratio is undefined; a violated cut then counts as
/// infinitely effective and anything else as 0.
pub fn efficacy(lambda: &[f64], mu: f64, lr_value: f64) -> f64 {
    let num = lr_value - mu;
    let norm = dot(lambda, lambda).sqrt();
    if norm == 0.0 {
        if num > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        num / norm
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for the `(round, article)` stream: ChaCha8 keyed by
/// `splitmix64(splitmix64(seed ^ splitmix64(round)) ^ article)`.
pub fn stream_rng(seed: u64, round: u64, article: usize) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(seed ^ splitmix64(round)) ^ article as u64);
    ChaCha8Rng::seed_from_u64(key)
}

fn check(pool: &CutPool, lambda: &[f64]) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if lambda.len() != pool.num_constraints() {
        return Err(Error::DimensionMismatch { what: "multiplier vector", expected: pool.num_constraints(), actual: lambda.len() });
    }
    Ok(())
}

/// Each article takes its offer from a uniformly drawn pooled cut.
pub fn random_cut(pool: &CutPool, lambda: &[f64], mu: f64, seed: u64, round: u64) -> Result<HeuristicOutcome> {
    check(pool, lambda)?;
    let j = pool.len();
    let sources = (0..pool.num_articles())
        .map(|i| stream_rng(seed, round, i).gen_range(0..j))
        .collect();
    Ok(HeuristicOutcome::from_sources(pool, CutOrigin::HeuristicRandom, sources, lambda, mu))
}

/// Each article takes the pooled offer maximizing `f_i + lambda^T A_i x_i`,
/// earliest cut on ties.
pub fn max_violation_cut(pool: &CutPool, lambda: &[f64], mu: f64) -> Result<HeuristicOutcome> {
    check(pool, lambda)?;
    let sources = (0..pool.num_articles())
        .map(|i| {
            let scores: Vec<f64> = pool.entries(i).iter().map(|e| e.profit + dot(lambda, &e.contributions)).collect();
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for (k, cut) in pool.cuts().iter().enumerate() {
                let s = scores[cut.selection[i]];
                if s > best_score {
                    best_score = s;
                    best = k;
                }
            }
            best
        })
        .collect();
    Ok(HeuristicOutcome::from_sources(pool, CutOrigin::HeuristicMaxviol, sources, lambda, mu))
}

/// The selection MIP's answer on the pool, used as a cut.
///
/// A search stopped by a node or time limit yields no cut.
pub fn feasibility_cut(
    pool: &CutPool,
    lambda: &[f64],
    mu: f64,
    opts: &PrimalOptions,
) -> Result<(HeuristicOutcome, PrimalSolution)> {
    check(pool, lambda)?;
    let sol = primal::solve_primal(pool, opts)?;
    if let Some(limit) = &sol.limit {
        return Err(Error::PrimalLimit(if limit == "time" { "time" } else { "node" }));
    }
    let outcome = HeuristicOutcome::from_sources(pool, CutOrigin::HeuristicFeasibility, sol.selection.clone(), lambda, mu);
    Ok((outcome, sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::master::solve_aggregated;

    fn pool(n: usize, j: usize, seed: u64) -> CutPool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = CutPool::new(n, vec![1.0, -1.0], 50.0);
        for _ in 0..j {
            let vals: Vec<(f64, Vec<f64>)> = (0..n)
                .map(|_| (rng.gen_range(0.0..10.0), vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]))
                .collect();
            p.add_values(&vals, CutOrigin::ExactLr).unwrap();
        }
        p
    }

    #[test]
    fn efficacy_conventions() {
        assert_eq!(efficacy(&[1.0, 0.0], 3.0, 3.0), 0.0);
        assert_eq!(efficacy(&[0.0, 2.0], 1.0, 3.0), 1.0);
        assert_eq!(efficacy(&[0.0, 0.0], 1.0, 3.0), f64::INFINITY);
        assert_eq!(efficacy(&[0.0, 0.0], 1.0, 1.0), 0.0);
    }

    #[test]
    fn single_cut_pool_reproduces_it() {
        let p = pool(4, 1, 3);
        let lam = [1.0, 2.0];
        assert_eq!(random_cut(&p, &lam, 0.0, 9, 0).unwrap().source_cuts, vec![0; 4]);
        assert_eq!(max_violation_cut(&p, &lam, 0.0).unwrap().source_cuts, vec![0; 4]);
        let (f, _) = feasibility_cut(&p, &lam, 0.0, &PrimalOptions::default()).unwrap();
        assert_eq!(f.selection, p.cut(0).selection);
    }

    #[test]
    fn random_cut_golden_indices() {
        let p = pool(5, 3, 8);
        let out = random_cut(&p, &[0.0, 0.0], 0.0, 42, 7).unwrap();
        let again = random_cut(&p, &[0.0, 0.0], 0.0, 42, 7).unwrap();
        assert_eq!(out.source_cuts, again.source_cuts);
        assert_eq!(out.source_cuts, vec![0, 1, 2, 1, 0]);
    }

    #[test]
    fn random_cut_marginals_are_uniform() {
        let p = pool(1, 4, 2);
        let draws = 10_000u64;
        let mut counts = [0u64; 4];
        for r in 0..draws {
            counts[random_cut(&p, &[0.0, 0.0], 0.0, 5, r).unwrap().source_cuts[0]] += 1;
        }
        let mean = draws as f64 / 4.0;
        let sigma = (draws as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn max_violation_at_zero_lambda_picks_best_profit() {
        let p = pool(6, 5, 4);
        let out = max_violation_cut(&p, &[0.0, 0.0], 0.0).unwrap();
        for i in 0..6 {
            let best = (0..5).map(|k| p.value(i, k).profit).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(p.value(i, out.source_cuts[i]).profit, best);
        }
    }

    #[test]
    fn max_violation_dominates_pure_and_random_cuts() {
        for seed in 0..20 {
            let p = pool(7, 6, seed);
            let m = solve_aggregated(&p).unwrap();
            let out = max_violation_cut(&p, &m.lambda, m.mu).unwrap();
            let tol = 1e-9 * out.lr_value.abs().max(1.0);
            for c in p.cuts() {
                assert!(out.lr_value >= c.value_at(&m.lambda) - tol);
            }
            let rnd = random_cut(&p, &m.lambda, m.mu, seed, 0).unwrap();
            assert!(out.lr_value >= rnd.lr_value - tol);
            for (i, &k) in out.source_cuts.iter().enumerate() {
                assert!(k < p.len());
                assert_eq!(out.selection[i], p.cut(k).selection[i]);
            }
        }
    }

    #[test]
    fn feasibility_cut_returns_feasible_best_cut() {
        let mut p = CutPool::new(2, vec![0.0], 10.0);
        p.add_values(&[(5.0, vec![1.0]), (5.0, vec![1.0])], CutOrigin::ExactLr).unwrap();
        p.add_values(&[(1.0, vec![-1.0]), (1.0, vec![-1.0])], CutOrigin::ExactLr).unwrap();
        let (out, sol) = feasibility_cut(&p, &[0.0], 10.0, &PrimalOptions::exact()).unwrap();
        assert_eq!(out.source_cuts, vec![0, 0]);
        assert!(sol.delta.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn feasibility_cut_beats_every_pure_cut() {
        for seed in 0..10 {
            let p = pool(5, 4, 100 + seed);
            let (_, sol) = feasibility_cut(&p, &[1.0, 1.0], 0.0, &PrimalOptions::exact()).unwrap();
            let prob = primal::build_selection(&p).unwrap();
            for choice in &prob.cut_choices {
                assert!(sol.objective >= prob.objective(choice) - 1e-12);
            }
        }
    }
}
