//! Evaluated solutions `X^1..X^j` and the per-article value table behind them.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, Offer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutOrigin {
    ExactLr,
    HeuristicRandom,
    HeuristicMaxviol,
    HeuristicFeasibility,
}

impl CutOrigin {
    pub fn as_str(&self) -> &'static str {
        match self {
            CutOrigin::ExactLr => "exact-lr",
            CutOrigin::HeuristicRandom => "heuristic-random",
            CutOrigin::HeuristicMaxviol => "heuristic-maxviol",
            CutOrigin::HeuristicFeasibility => "heuristic-feasibility",
        }
    }

    pub fn is_heuristic(&self) -> bool {
        !matches!(self, CutOrigin::ExactLr)
    }
}

/// One distinct offer of an article seen in some cut.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolEntry {
    pub profit: f64,
    pub contributions: Vec<f64>,
    /// Absent for pools restored from a value-only dump.
    pub offer: Option<Offer>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cut {
    pub origin: CutOrigin,
    /// Entry index per article into the pool's value table.
    pub selection: Vec<usize>,
    pub total_profit: f64,
    pub total_contribution: Vec<f64>,
    /// `b - A X^k`; positive entries are violated constraints.
    pub residual: Vec<f64>,
    /// Same selection as an earlier cut.
    pub duplicate: bool,
}

impl Cut {
    /// `LR(lambda, X^k) = f(X^k) + lambda^T (A X^k - b)`.
    pub fn value_at(&self, lambda: &[f64]) -> f64 {
        self.total_profit - dot(lambda, &self.residual)
    }

    pub fn is_feasible(&self) -> bool {
        self.residual.iter().all(|r| *r <= 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CutPool {
    rhs: Vec<f64>,
    lambda_bar: f64,
    entries: Vec<Vec<PoolEntry>>,
    entry_index: Vec<HashMap<EntryKey, usize>>,
    cuts: Vec<Cut>,
    seen: HashMap<Vec<usize>, usize>,
    max_excess: Vec<f64>,
    min_excess: Vec<f64>,
    max_profit: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum EntryKey {
    Path(Vec<Vec<u8>>),
    Bits(Vec<u64>),
}

impl EntryKey {
    fn of(profit: f64, contributions: &[f64], offer: Option<&Offer>) -> Self {
        match offer {
            Some(o) => EntryKey::Path(o.discount_index.clone()),
            None => EntryKey::Bits(std::iter::once(profit).chain(contributions.iter().copied()).map(f64::to_bits).collect()),
        }
    }
}

impl CutPool {
    pub fn new(num_articles: usize, rhs: Vec<f64>, lambda_bar: f64) -> Self {
        let l = rhs.len();
        Self {
            rhs,
            lambda_bar,
            entries: vec![Vec::new(); num_articles],
            entry_index: vec![HashMap::new(); num_articles],
            cuts: Vec::new(),
            seen: HashMap::new(),
            max_excess: vec![f64::NEG_INFINITY; l],
            min_excess: vec![f64::INFINITY; l],
            max_profit: f64::NEG_INFINITY,
        }
    }

    pub fn for_instance(instance: &crate::model::Instance) -> Self {
        Self::new(instance.num_articles(), instance.rhs(), instance.lambda_bar)
    }

    pub fn num_articles(&self) -> usize {
        self.entries.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rhs.len()
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn lambda_bar(&self) -> f64 {
        self.lambda_bar
    }

    pub fn set_lambda_bar(&mut self, lambda_bar: f64) {
        self.lambda_bar = lambda_bar;
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn cut(&self, k: usize) -> &Cut {
        &self.cuts[k]
    }

    pub fn last(&self) -> Option<&Cut> {
        self.cuts.last()
    }

    /// Distinct offers of article `i`, in order of first appearance.
    pub fn entries(&self, article: usize) -> &[PoolEntry] {
        &self.entries[article]
    }

    /// `X^k_i` as a table entry.
    pub fn value(&self, article: usize, cut: usize) -> &PoolEntry {
        &self.entries[article][self.cuts[cut].selection[article]]
    }

    /// `max_k (A X^k - b)_l`.
    pub fn max_excess(&self) -> &[f64] {
        &self.max_excess
    }

    pub fn min_excess(&self) -> &[f64] {
        &self.min_excess
    }

    /// `max_k f(X^k)`.
    pub fn max_profit(&self) -> f64 {
        self.max_profit
    }

    /// Number of distinct cuts (duplicates excluded).
    pub fn num_distinct(&self) -> usize {
        self.seen.len()
    }

    /// Appends a cut built from full offers, one per article.
    pub fn add_cut(&mut self, offers: &[Offer], origin: CutOrigin) -> Result<usize> {
        self.check_articles(offers.len())?;
        let l = self.num_constraints();
        for o in offers {
            if o.contributions.len() != l {
                return Err(Error::DimensionMismatch { what: "offer contributions", expected: l, actual: o.contributions.len() });
            }
        }
        let selection = offers
            .iter()
            .enumerate()
            .map(|(i, o)| self.intern(i, o.profit, &o.contributions, Some(o)))
            .collect();
        self.add_selection(selection, origin)
    }

    /// Appends a cut from raw per-article `(f_i, A_i x_i)` values.
    pub fn add_values(&mut self, values: &[(f64, Vec<f64>)], origin: CutOrigin) -> Result<usize> {
        self.check_articles(values.len())?;
        let l = self.num_constraints();
        for (_, c) in values {
            if c.len() != l {
                return Err(Error::DimensionMismatch { what: "article contributions", expected: l, actual: c.len() });
            }
        }
        let selection = values
            .iter()
            .enumerate()
            .map(|(i, (p, c))| self.intern(i, *p, c, None))
            .collect();
        self.add_selection(selection, origin)
    }

    /// Appends a cut whose articles all reuse existing table entries.
    pub fn add_selection(&mut self, selection: Vec<usize>, origin: CutOrigin) -> Result<usize> {
        self.check_articles(selection.len())?;
        for (i, &e) in selection.iter().enumerate() {
            if e >= self.entries[i].len() {
                return Err(Error::InvalidInput(format!("article {i} has no pool entry {e}")));
            }
        }
        let (total_profit, total_contribution) = self.totals(&selection);
        let residual: Vec<f64> = self.rhs.iter().zip(&total_contribution).map(|(b, a)| b - a).collect();
        for (l, r) in residual.iter().enumerate() {
            let excess = -r;
            self.max_excess[l] = self.max_excess[l].max(excess);
            self.min_excess[l] = self.min_excess[l].min(excess);
        }
        self.max_profit = self.max_profit.max(total_profit);
        let k = self.cuts.len();
        let duplicate = match self.seen.get(&selection) {
            Some(_) => true,
            None => {
                self.seen.insert(selection.clone(), k);
                false
            }
        };
        self.cuts.push(Cut { origin, selection, total_profit, total_contribution, residual, duplicate });
        Ok(k)
    }

    /// Index of the earliest cut with this exact selection.
    pub fn find_selection(&self, selection: &[usize]) -> Option<usize> {
        self.seen.get(selection).copied()
    }

    /// Table sums of a selection in article order.
    pub fn totals(&self, selection: &[usize]) -> (f64, Vec<f64>) {
        let mut profit = 0.0;
        let mut contribution = vec![0.0; self.num_constraints()];
        for (i, &e) in selection.iter().enumerate() {
            let entry = &self.entries[i][e];
            profit += entry.profit;
            for (t, v) in contribution.iter_mut().zip(&entry.contributions) {
                *t += v;
            }
        }
        (profit, contribution)
    }

    /// Offers of a selection, when the pool retains them.
    pub fn offers(&self, selection: &[usize]) -> Option<Vec<Offer>> {
        selection
            .iter()
            .enumerate()
            .map(|(i, &e)| self.entries[i][e].offer.clone())
            .collect()
    }

    /// `min_k LR(lambda, X^k)` restricted to pooled cuts.
    pub fn best_cut_value(&self, lambda: &[f64]) -> f64 {
        self.cuts.iter().map(|c| c.value_at(lambda)).fold(f64::NEG_INFINITY, f64::max)
    }

    fn intern(&mut self, article: usize, profit: f64, contributions: &[f64], offer: Option<&Offer>) -> usize {
        let key = EntryKey::of(profit, contributions, offer);
        if let Some(&e) = self.entry_index[article].get(&key) {
            return e;
        }
        let e = self.entries[article].len();
        self.entries[article].push(PoolEntry { profit, contributions: contributions.to_vec(), offer: offer.cloned() });
        self.entry_index[article].insert(key, e);
        e
    }

    fn check_articles(&self, got: usize) -> Result<()> {
        if got != self.num_articles() {
            return Err(Error::DimensionMismatch { what: "articles in cut", expected: self.num_articles(), actual: got });
        }
        Ok(())
    }
}

pub const DUMP_FORMAT: u32 = 1;

/// Value-only JSON form of a pool, used to replay frozen-pool experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolDump {
    pub format: u32,
    pub rhs: Vec<f64>,
    pub lambda_bar: f64,
    /// Per article, its distinct `(f_i, A_i x_i)` values.
    pub table: Vec<Vec<DumpEntry>>,
    pub cuts: Vec<DumpCut>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpEntry {
    pub profit: f64,
    pub contributions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpCut {
    pub origin: CutOrigin,
    pub selection: Vec<usize>,
    pub total_profit: f64,
    pub total_contribution: Vec<f64>,
}

impl CutPool {
    pub fn to_dump(&self) -> PoolDump {
        PoolDump {
            format: DUMP_FORMAT,
            rhs: self.rhs.clone(),
            lambda_bar: self.lambda_bar,
            table: self
                .entries
                .iter()
                .map(|es| es.iter().map(|e| DumpEntry { profit: e.profit, contributions: e.contributions.clone() }).collect())
                .collect(),
            cuts: self
                .cuts
                .iter()
                .map(|c| DumpCut {
                    origin: c.origin,
                    selection: c.selection.clone(),
                    total_profit: c.total_profit,
                    total_contribution: c.total_contribution.clone(),
                })
                .collect(),
        }
    }

    pub fn from_dump(dump: &PoolDump) -> Result<Self> {
        if dump.format != DUMP_FORMAT {
            return Err(Error::InvalidInput(format!("unsupported pool format {}", dump.format)));
        }
        if !(dump.lambda_bar.is_finite() && dump.lambda_bar > 0.0) {
            return Err(Error::InvalidInput("pool lambda_bar must be positive".into()));
        }
        let mut pool = CutPool::new(dump.table.len(), dump.rhs.clone(), dump.lambda_bar);
        for (i, es) in dump.table.iter().enumerate() {
            for e in es {
                if e.contributions.len() != dump.rhs.len() {
                    return Err(Error::DimensionMismatch { what: "pool entry contributions", expected: dump.rhs.len(), actual: e.contributions.len() });
                }
                let key = EntryKey::of(e.profit, &e.contributions, None);
                if pool.entry_index[i].contains_key(&key) {
                    return Err(Error::InvalidInput(format!("duplicate table entry for article {i}")));
                }
                let idx = pool.entries[i].len();
                pool.entries[i].push(PoolEntry { profit: e.profit, contributions: e.contributions.clone(), offer: None });
                pool.entry_index[i].insert(key, idx);
            }
        }
        for c in &dump.cuts {
            let k = pool.add_selection(c.selection.clone(), c.origin)?;
            let cut = &pool.cuts[k];
            let tol = 1e-9 * (1.0 + cut.total_profit.abs());
            if (cut.total_profit - c.total_profit).abs() > tol {
                return Err(Error::InvalidInput(format!("cut {k}: total profit disagrees with the table")));
            }
        }
        Ok(pool)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_dump())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_dump(&serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool_2x1() -> CutPool {
        CutPool::new(2, vec![1.0], 100.0)
    }

    #[test]
    fn first_cut_sets_extrema() {
        let mut p = pool_2x1();
        p.add_values(&[(3.0, vec![0.5]), (4.0, vec![-1.0])], CutOrigin::ExactLr).unwrap();
        assert_eq!(p.len(), 1);
        let c = p.cut(0);
        assert_eq!(c.total_profit, 7.0);
        assert_eq!(c.residual, vec![1.5]);
        assert_eq!(p.max_excess(), &[-1.5]);
        assert_eq!(p.min_excess(), &[-1.5]);
        assert_eq!(p.max_profit(), 7.0);
    }

    #[test]
    fn duplicate_cut_is_flagged() {
        let mut p = pool_2x1();
        let v = [(3.0, vec![0.5]), (4.0, vec![-1.0])];
        p.add_values(&v, CutOrigin::ExactLr).unwrap();
        p.add_values(&v, CutOrigin::ExactLr).unwrap();
        assert!(!p.cut(0).duplicate);
        assert!(p.cut(1).duplicate);
        assert_eq!(p.num_distinct(), 1);
        assert_eq!(p.entries(0).len(), 1);
    }

    #[test]
    fn max_profit_matches_table_column_sums() {
        let mut p = pool_2x1();
        p.add_values(&[(3.0, vec![0.5]), (4.0, vec![-1.0])], CutOrigin::ExactLr).unwrap();
        p.add_values(&[(5.0, vec![0.0]), (4.0, vec![-1.0])], CutOrigin::ExactLr).unwrap();
        p.add_values(&[(1.0, vec![2.0]), (1.5, vec![2.0])], CutOrigin::ExactLr).unwrap();
        let sums: Vec<f64> = (0..3).map(|k| (0..2).map(|i| p.value(i, k).profit).sum()).collect();
        assert_eq!(p.max_profit(), sums.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let excess: Vec<f64> = (0..3).map(|k| p.cut(k).total_contribution[0] - 1.0).collect();
        assert_eq!(p.max_excess()[0], excess.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        assert_eq!(p.min_excess()[0], excess.iter().copied().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let mut p = pool_2x1();
        assert!(p.add_values(&[(1.0, vec![0.0])], CutOrigin::ExactLr).is_err());
        assert!(p.add_values(&[(1.0, vec![0.0, 1.0]), (1.0, vec![0.0])], CutOrigin::ExactLr).is_err());
        assert!(p.add_selection(vec![0, 0], CutOrigin::HeuristicRandom).is_err());
    }

    #[test]
    fn dump_roundtrip() {
        let mut p = pool_2x1();
        p.add_values(&[(3.0, vec![0.5]), (4.0, vec![-1.0])], CutOrigin::ExactLr).unwrap();
        p.add_values(&[(5.0, vec![0.0]), (4.0, vec![-1.0])], CutOrigin::ExactLr).unwrap();
        p.add_selection(vec![1, 0], CutOrigin::HeuristicMaxviol).unwrap();
        let back = CutPool::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back.cuts(), p.cuts());
        assert_eq!(back.max_excess(), p.max_excess());
    }
}
