//! Exhaustive reference solvers, for tests and acceptance checks only.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::master::{CutPool, Partition};
use crate::model::{dot, residual_satisfied, Instance, Offer};
use crate::subproblem::enumerate_offers;

/// Default cap on the number of joint offer combinations.
pub const DEFAULT_ORACLE_CAP: u128 = 10_000_000;

/// Most multiplier dimensions [`oracle_master`] accepts.
pub const ORACLE_MAX_DIMS: usize = 4;

const MAX_SUBSETS: u128 = 5_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub value: f64,
    /// Offer index per article into the enumeration order of that article.
    pub selection: Vec<usize>,
    pub offers: Vec<Offer>,
}

struct Search<'a> {
    sets: &'a [Vec<Offer>],
    rhs: &'a [f64],
}

#[derive(Clone)]
struct Best {
    value: f64,
    selection: Vec<usize>,
}

impl Best {
    // lexicographically smaller selections win ties
    fn better(a: Option<Best>, b: Option<Best>) -> Option<Best> {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(a), Some(b)) => {
                if b.value > a.value || (b.value == a.value && b.selection < a.selection) {
                    Some(b)
                } else {
                    Some(a)
                }
            }
        }
    }
}

impl Search<'_> {
    fn descend(&self, i: usize, profit: f64, total: &mut Vec<f64>, mag: &mut Vec<f64>, sel: &mut Vec<usize>, best: &mut Option<Best>) {
        if i == self.sets.len() {
            let feasible = self
                .rhs
                .iter()
                .zip(total.iter())
                .zip(mag.iter())
                .all(|((b, a), m)| residual_satisfied(b - a, m + b.abs()));
            if feasible && best.as_ref().is_none_or(|b| profit > b.value) {
                *best = Some(Best { value: profit, selection: sel.clone() });
            }
            return;
        }
        let saved_total = total.clone();
        let saved_mag = mag.clone();
        for (k, offer) in self.sets[i].iter().enumerate() {
            for (l, c) in offer.contributions.iter().enumerate() {
                total[l] = saved_total[l] + c;
                mag[l] = saved_mag[l] + c.abs();
            }
            sel.push(k);
            self.descend(i + 1, profit + offer.profit, total, mag, sel, best);
            sel.pop();
        }
        total.copy_from_slice(&saved_total);
        mag.copy_from_slice(&saved_mag);
    }
}

/// Best feasible joint selection by exhaustive search over the product of the
/// per-article offer sets; `Ok(None)` when no combination is feasible.
pub fn oracle_solve(instance: &Instance, cap: u128) -> Result<Option<OracleSolution>> {
    let sets: Vec<Vec<Offer>> = instance
        .articles
        .iter()
        .map(|a| enumerate_offers(a, &instance.grid, &instance.constraints, cap))
        .collect::<Result<_>>()?;
    let size = sets.iter().try_fold(1u128, |acc, s| acc.checked_mul(s.len() as u128)).unwrap_or(u128::MAX);
    if size > cap {
        return Err(Error::OracleCap { size, cap });
    }
    let rhs = instance.rhs();
    let l = rhs.len();
    let search = Search { sets: &sets, rhs: &rhs };
    let best = if sets.is_empty() {
        let mut best = None;
        search.descend(0, 0.0, &mut vec![0.0; l], &mut vec![0.0; l], &mut Vec::new(), &mut best);
        best
    } else {
        sets[0]
            .par_iter()
            .enumerate()
            .map(|(k, offer)| {
                let mut best = None;
                let mut total = offer.contributions.clone();
                let mut mag: Vec<f64> = offer.contributions.iter().map(|c| c.abs()).collect();
                search.descend(1, 0.0 + offer.profit, &mut total, &mut mag, &mut vec![k], &mut best);
                best
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(None, Best::better)
    };
    Ok(best.map(|b| OracleSolution {
        value: b.value,
        offers: b.selection.iter().enumerate().map(|(i, &k)| sets[i][k].clone()).collect(),
        selection: b.selection,
    }))
}

/// Optimum of the cutting-plane master over `partition` by vertex enumeration.
///
/// Each group contributes `max_k (f_gk + lambda^T c_gk)` over its distinct
/// rows; the objective subtracts `lambda^T b`. Every vertex of the common
/// refinement of the groups' linearity regions inside `[0, lambda_bar]^L` is an
/// intersection of `L` hyperplanes drawn from pairwise row differences and
/// box faces, and the minimum sits on one of them.
pub fn oracle_master(pool: &CutPool, partition: &Partition) -> Result<f64> {
    let l = pool.num_constraints();
    if l > ORACLE_MAX_DIMS {
        return Err(Error::OracleCap { size: l as u128, cap: ORACLE_MAX_DIMS as u128 });
    }
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let lambda_bar = pool.lambda_bar();
    let rhs = pool.rhs().to_vec();

    // distinct (f, c) rows per group, summed over the group's articles
    let groups: Vec<Vec<(f64, Vec<f64>)>> = partition
        .groups()
        .iter()
        .map(|g| {
            let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
            for cut in pool.cuts() {
                let mut f = 0.0;
                let mut c = vec![0.0; l];
                for &i in g {
                    let e = &pool.entries(i)[cut.selection[i]];
                    f += e.profit;
                    for (t, v) in c.iter_mut().zip(&e.contributions) {
                        *t += v;
                    }
                }
                if !rows.iter().any(|(rf, rc)| *rf == f && *rc == c) {
                    rows.push((f, c));
                }
            }
            rows
        })
        .collect();
    let value = |lambda: &[f64]| -> f64 {
        let mut total = 0.0;
        for rows in &groups {
            total += rows.iter().map(|(f, c)| f + dot(lambda, c)).fold(f64::NEG_INFINITY, f64::max);
        }
        total - dot(lambda, &rhs)
    };
    if l == 0 {
        return Ok(value(&[]));
    }

    // hyperplanes a^T lambda = beta
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for rows in &groups {
        for (p, (fp, cp)) in rows.iter().enumerate() {
            for (fq, cq) in &rows[p + 1..] {
                let a: Vec<f64> = cp.iter().zip(cq).map(|(x, y)| x - y).collect();
                if a.iter().any(|v| *v != 0.0) {
                    planes.push((a, fq - fp));
                }
            }
        }
    }
    for d in 0..l {
        let mut e = vec![0.0; l];
        e[d] = 1.0;
        planes.push((e.clone(), 0.0));
        planes.push((e, lambda_bar));
    }
    let subsets = binomial(planes.len() as u128, l as u128);
    if subsets > MAX_SUBSETS {
        return Err(Error::OracleCap { size: subsets, cap: MAX_SUBSETS });
    }

    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..l).collect();
    loop {
        if let Some(lambda) = intersect(&planes, &idx) {
            let tol = 1e-9 * lambda_bar.max(1.0);
            if lambda.iter().all(|v| *v >= -tol && *v <= lambda_bar + tol) {
                let clamped: Vec<f64> = lambda.iter().map(|v| v.clamp(0.0, lambda_bar)).collect();
                best = best.min(value(&clamped));
            }
        }
        if !next_subset(&mut idx, planes.len()) {
            break;
        }
    }
    Ok(best)
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

fn next_subset(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Solves the square system picked by `rows` with partial pivoting; `None` when singular.
fn intersect(planes: &[(Vec<f64>, f64)], rows: &[usize]) -> Option<Vec<f64>> {
    let l = rows.len();
    let mut m: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| {
            let mut row = planes[r].0.clone();
            row.push(planes[r].1);
            row
        })
        .collect();
    for col in 0..l {
        let piv = (col..l).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        let scale = m[piv][..l].iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if m[piv][col].abs() <= 1e-12 * scale.max(1e-300) {
            return None;
        }
        m.swap(col, piv);
        for r in 0..l {
            if r != col {
                let f = m[r][col] / m[col][col];
                if f != 0.0 {
                    for c in col..=l {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    Some((0..l).map(|r| m[r][l] / m[r][r]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::master::{self, CutOrigin};
    use crate::model::{canonicalize, Article, CountryParams, DiscountGrid, FeatureWeights, RawConstraint, Sense};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pool_1d(cuts: &[(f64, f64)], rhs: f64, bar: f64) -> CutPool {
        let mut p = CutPool::new(1, vec![rhs], bar);
        for &(f, c) in cuts {
            p.add_values(&[(f, vec![c])], CutOrigin::ExactLr).unwrap();
        }
        p
    }

    #[test]
    fn opposite_slopes_meet_at_intersection() {
        // 3 - 2 lambda and -1 + lambda (rhs 0) cross at lambda = 4/3
        let p = pool_1d(&[(3.0, -2.0), (-1.0, 1.0)], 0.0, 10.0);
        let v = oracle_master(&p, &Partition::single(1)).unwrap();
        assert!((v - (-1.0 + 4.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn box_corner_when_bound_binds() {
        let p = pool_1d(&[(5.0, -1.0)], 0.0, 2.0);
        let v = oracle_master(&p, &Partition::single(1)).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_too_many_dimensions() {
        let mut p = CutPool::new(1, vec![0.0; 5], 1.0);
        p.add_values(&[(1.0, vec![0.0; 5])], CutOrigin::ExactLr).unwrap();
        assert!(matches!(oracle_master(&p, &Partition::single(1)), Err(Error::OracleCap { .. })));
    }

    #[test]
    fn matches_simplex_on_random_two_dimensional_pools() {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..4);
            let rhs = vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let mut p = CutPool::new(n, rhs, rng.gen_range(1.0..20.0));
            for _ in 0..rng.gen_range(1..6) {
                let vals: Vec<(f64, Vec<f64>)> = (0..n)
                    .map(|_| (rng.gen_range(0.0..10.0), vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]))
                    .collect();
                p.add_values(&vals, CutOrigin::ExactLr).unwrap();
            }
            let agg = master::solve_aggregated(&p).unwrap().mu;
            let dis = master::solve_disaggregated(&p).unwrap().mu;
            let oa = oracle_master(&p, &Partition::single(n)).unwrap();
            let od = oracle_master(&p, &Partition::singletons(n)).unwrap();
            assert!((agg - oa).abs() <= 1e-8 * oa.abs().max(1.0), "seed {seed}: {agg} vs {oa}");
            assert!((dis - od).abs() <= 1e-8 * od.abs().max(1.0), "seed {seed}: {dis} vs {od}");
        }
    }

    fn flat_article(id: usize) -> Article {
        Article {
            id,
            countries: vec![CountryParams {
                base_price: 10.0,
                initial_stock: 10.0,
                base_demand: 4.0,
                elasticity: 2.0,
                salvage_fraction: 0.1,
            }],
            seasonality: vec![1.0, 1.0],
            unit_cost: 0.3,
        }
    }

    fn instance(n: usize, constraints: Vec<RawConstraint>) -> Instance {
        Instance {
            articles: (0..n).map(flat_article).collect(),
            grid: DiscountGrid::new(vec![0.0, 0.4]).unwrap(),
            constraints: constraints.iter().map(|c| canonicalize(c).unwrap()).collect(),
            lambda_bar: 100.0,
            seed: 0,
        }
    }

    #[test]
    fn unconstrained_optimum_sums_article_maxima() {
        let inst = instance(3, vec![]);
        let sol = oracle_solve(&inst, DEFAULT_ORACLE_CAP).unwrap().unwrap();
        let per: f64 = inst
            .articles
            .iter()
            .map(|a| {
                enumerate_offers(a, &inst.grid, &[], 1000).unwrap().iter().map(|o| o.profit).fold(f64::NEG_INFINITY, f64::max)
            })
            .sum();
        assert_eq!(sol.value, per);
    }

    #[test]
    fn two_articles_with_joint_argmax_excluded() {
        // at most one of the two articles may sell at full price in week one
        let weights = FeatureWeights { markdown: 1.0, ..Default::default() };
        let inst = instance(2, vec![RawConstraint::custom(Some(0), weights, Sense::Ge, 5.0)]);
        let sets: Vec<Vec<Offer>> =
            inst.articles.iter().map(|a| enumerate_offers(a, &inst.grid, &inst.constraints, 1000).unwrap()).collect();
        let mut best = f64::NEG_INFINITY;
        for a in &sets[0] {
            for b in &sets[1] {
                if a.contributions[0] + b.contributions[0] >= 5.0 {
                    best = best.max(a.profit + b.profit);
                }
            }
        }
        let sol = oracle_solve(&inst, DEFAULT_ORACLE_CAP).unwrap().unwrap();
        assert_eq!(sol.value, best);
        let unconstrained = oracle_solve(&instance(2, vec![]), DEFAULT_ORACLE_CAP).unwrap().unwrap();
        assert!(sol.value < unconstrained.value);
    }

    #[test]
    fn infeasible_verdict() {
        let weights = FeatureWeights { sales: 1.0, ..Default::default() };
        let inst = instance(2, vec![RawConstraint::custom(None, weights, Sense::Ge, 1e6)]);
        assert!(oracle_solve(&inst, DEFAULT_ORACLE_CAP).unwrap().is_none());
    }

    #[test]
    fn cap_breach_is_rejected() {
        let inst = instance(6, vec![]);
        assert!(matches!(oracle_solve(&inst, 10), Err(Error::OracleCap { .. }) | Err(Error::EnumerationCap { .. })));
    }
}
