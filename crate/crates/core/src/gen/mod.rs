//! Seeded synthetic instances and brute-force reference solvers.

mod oracle;

pub use oracle::{oracle_master, oracle_solve, OracleSolution, DEFAULT_ORACLE_CAP, ORACLE_MAX_DIMS};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{canonicalize, Article, CountryParams, DiscountGrid, Instance, RawConstraint};
use crate::subproblem::{self, path_count, ArticleTable, CountryEconomy, DEFAULT_PATH_CAP};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Targets bracket the unconstrained discount rate.
    #[default]
    Easy,
    /// Lower targets well above the unconstrained rate in every country that
    /// has room to discount deeper.
    Hard,
    /// As `Hard`, with country 0's lower target above the deepest grid level.
    InfeasibleLink,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Preset::Easy),
            "hard" => Ok(Preset::Hard),
            "infeasible-link" => Ok(Preset::InfeasibleLink),
            _ => Err(Error::InvalidInput(format!("unknown preset '{s}'"))),
        }
    }
}

/// Closed sampling interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range(pub f64, pub f64);

impl Range {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        rng.gen_range(self.0..=self.1)
    }

    fn check(&self, name: &str, min: f64, max: f64) -> Result<()> {
        let Range(lo, hi) = *self;
        if !(lo.is_finite() && hi.is_finite() && lo < hi && lo >= min && hi <= max) {
            return Err(Error::InvalidInput(format!("{name} range [{lo}, {hi}] must satisfy {min} <= lo < hi <= {max}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub articles: usize,
    pub countries: usize,
    pub weeks: usize,
    pub discount_levels: usize,
    pub max_discount: f64,
    pub base_price: Range,
    /// Initial stock as a multiple of the full-price season demand.
    pub stock_cover: Range,
    /// Full-price units per week.
    pub base_demand: Range,
    pub elasticity: Range,
    pub seasonality: Range,
    pub salvage_fraction: Range,
    pub unit_cost: Range,
    /// Explicit `(r_lo, r_hi)` per country; the preset decides when absent.
    pub targets: Option<Vec<(f64, f64)>>,
    pub preset: Preset,
    pub lambda_bar: Option<f64>,
    pub path_cap: u128,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            articles: 20,
            countries: 2,
            weeks: 4,
            discount_levels: 4,
            max_discount: 0.6,
            base_price: Range(20.0, 80.0),
            stock_cover: Range(0.6, 1.6),
            base_demand: Range(2.0, 20.0),
            elasticity: Range(1.0, 4.0),
            seasonality: Range(0.6, 1.2),
            salvage_fraction: Range(0.05, 0.3),
            unit_cost: Range(0.2, 0.5),
            targets: None,
            preset: Preset::Easy,
            lambda_bar: None,
            path_cap: DEFAULT_PATH_CAP,
            seed: 0,
        }
    }
}

impl GenSpec {
    pub fn new(articles: usize, preset: Preset, seed: u64) -> Self {
        Self { articles, preset, seed, ..Self::default() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.articles == 0 || self.countries == 0 || self.weeks == 0 || self.discount_levels == 0 {
            return Err(Error::InvalidInput("articles, countries, weeks and discount levels must be positive".into()));
        }
        if self.discount_levels > 1 && !(self.max_discount > 0.0 && self.max_discount < 1.0) {
            return Err(Error::InvalidInput(format!("max discount {} outside (0, 1)", self.max_discount)));
        }
        self.base_price.check("base price", f64::MIN_POSITIVE, f64::MAX)?;
        self.stock_cover.check("stock cover", 0.0, f64::MAX)?;
        self.base_demand.check("base demand", 0.0, f64::MAX)?;
        self.elasticity.check("elasticity", 0.0, f64::MAX)?;
        self.seasonality.check("seasonality", 0.0, f64::MAX)?;
        self.salvage_fraction.check("salvage fraction", 0.0, 0.999)?;
        self.unit_cost.check("unit cost", 0.0, 0.999)?;
        if let Some(t) = &self.targets {
            if t.len() != self.countries {
                return Err(Error::DimensionMismatch { what: "target bands", expected: self.countries, actual: t.len() });
            }
            for &(lo, hi) in t {
                if !(0.0 <= lo && lo <= hi && hi < 1.0) {
                    return Err(Error::InvalidInput(format!("target band ({lo}, {hi}) needs 0 <= r_lo <= r_hi < 1")));
                }
            }
        }
        if let Some(lb) = self.lambda_bar {
            if !(lb.is_finite() && lb > 0.0) {
                return Err(Error::InvalidInput(format!("lambda_bar must be positive, got {lb}")));
            }
        }
        let paths = path_count(self.weeks, self.discount_levels);
        if paths > self.path_cap {
            return Err(Error::EnumerationCap { count: paths, cap: self.path_cap });
        }
        Ok(())
    }
}

fn round_to(x: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (x * s).round() / s
}

fn sample_article(id: usize, spec: &GenSpec, rng: &mut ChaCha8Rng) -> Article {
    let seasonality: Vec<f64> = (0..spec.weeks).map(|_| round_to(spec.seasonality.sample(rng), 3)).collect();
    let season_total: f64 = seasonality.iter().sum();
    let unit_cost = round_to(spec.unit_cost.sample(rng), 3);
    let countries = (0..spec.countries)
        .map(|_| {
            let base_price = round_to(spec.base_price.sample(rng), 2);
            let base_demand = round_to(spec.base_demand.sample(rng), 3);
            let cover = spec.stock_cover.sample(rng);
            CountryParams {
                base_price,
                initial_stock: (cover * base_demand * season_total).round(),
                base_demand,
                elasticity: round_to(spec.elasticity.sample(rng), 3),
                salvage_fraction: round_to(spec.salvage_fraction.sample(rng), 3),
            }
        })
        .collect();
    Article { id, countries, seasonality, unit_cost }
}

/// Per-country sales-weighted discount rate of the unconstrained profit maximizer.
pub fn unconstrained_sdr(articles: &[Article], grid: &DiscountGrid, countries: usize, cap: u128) -> Result<Vec<f64>> {
    let mut markdown = vec![0.0; countries];
    let mut full = vec![0.0; countries];
    for a in articles {
        let offer = ArticleTable::build(a, grid, cap)?.solve(&[], &[]).offer;
        for c in 0..countries {
            let fw = CountryEconomy::new(a, c, grid).first_week(offer.discount_index[c][0] as usize);
            markdown[c] += (fw.base_price - fw.price) * fw.sales;
            full[c] += fw.base_price * fw.sales;
        }
    }
    Ok(markdown.iter().zip(&full).map(|(m, f)| if *f > 0.0 { m / f } else { 0.0 }).collect())
}

fn band_above(lo: f64) -> (f64, f64) {
    (lo, lo + (0.05f64).min((1.0 - lo) / 2.0))
}

fn preset_targets(preset: Preset, s0: &[f64], dmax: f64) -> Vec<(f64, f64)> {
    s0.iter()
        .enumerate()
        .map(|(c, &s)| {
            let band = match preset {
                Preset::Easy => (0.5 * s, s + (0.05f64).min((1.0 - s) / 2.0)),
                Preset::Hard => band_above(s + 0.7 * (dmax - s)),
                Preset::InfeasibleLink if c == 0 => band_above(dmax + 0.5 * (1.0 - dmax)),
                Preset::InfeasibleLink => band_above(s + 0.7 * (dmax - s)),
            };
            (round_to(band.0, 6), round_to(band.1, 6))
        })
        .collect()
}

/// Builds an instance with one sDR band, a lower and an upper constraint, per
/// country. The same spec always yields the same instance.
pub fn generate(spec: &GenSpec) -> Result<Instance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let grid = DiscountGrid::uniform(spec.discount_levels, spec.max_discount)?;
    let articles: Vec<Article> = (0..spec.articles).map(|i| sample_article(i, spec, &mut rng)).collect();
    let targets = match &spec.targets {
        Some(t) => t.clone(),
        None => {
            let s0 = unconstrained_sdr(&articles, &grid, spec.countries, spec.path_cap)?;
            preset_targets(spec.preset, &s0, grid.max_level())
        }
    };
    let mut constraints = Vec::with_capacity(2 * spec.countries);
    for (c, &(lo, hi)) in targets.iter().enumerate() {
        constraints.push(canonicalize(&RawConstraint::sdr_lower(c, lo))?);
        constraints.push(canonicalize(&RawConstraint::sdr_upper(c, hi))?);
    }
    let lambda_bar = match spec.lambda_bar {
        Some(v) => v,
        None => subproblem::default_lambda_bar(&articles, &grid, &constraints, spec.path_cap)?,
    };
    let instance = Instance { articles, grid, constraints, lambda_bar, seed: spec.seed };
    instance.validate()?;
    Ok(instance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{run, DriverConfig, Strategy};
    use crate::subproblem::evaluate_lr;

    fn tiny(preset: Preset, seed: u64) -> GenSpec {
        GenSpec { articles: 4, weeks: 3, discount_levels: 3, preset, seed, ..GenSpec::default() }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = generate(&tiny(Preset::Hard, 5)).unwrap().to_json().unwrap();
        let b = generate(&tiny(Preset::Hard, 5)).unwrap().to_json().unwrap();
        let c = generate(&tiny(Preset::Hard, 6)).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn json_roundtrip_preserves_instance() {
        let inst = generate(&tiny(Preset::Easy, 1)).unwrap();
        assert_eq!(Instance::from_json(&inst.to_json().unwrap()).unwrap(), inst);
    }

    #[test]
    fn single_offer_instance() {
        let spec = GenSpec { articles: 1, countries: 1, weeks: 1, discount_levels: 1, ..GenSpec::default() };
        let inst = generate(&spec).unwrap();
        let out = run(&inst, &DriverConfig::default()).unwrap();
        assert_eq!(out.summary.outer_iterations, 1);
        assert_eq!(out.summary.heuristic_cuts, 0);
    }

    #[test]
    fn rejects_enumeration_cap_breach() {
        let spec = GenSpec { weeks: 30, discount_levels: 10, ..GenSpec::default() };
        match generate(&spec) {
            Err(Error::EnumerationCap { count, cap }) => {
                assert_eq!(count, path_count(30, 10));
                assert_eq!(cap, DEFAULT_PATH_CAP);
            }
            other => panic!("expected cap rejection, got {other:?}"),
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        let bad = [
            GenSpec { articles: 0, ..GenSpec::default() },
            GenSpec { base_price: Range(5.0, 5.0), ..GenSpec::default() },
            GenSpec { targets: Some(vec![(0.3, 0.2), (0.1, 0.2)]), ..GenSpec::default() },
            GenSpec { targets: Some(vec![(0.1, 0.2)]), ..GenSpec::default() },
        ];
        for s in bad {
            assert!(generate(&s).is_err(), "{s:?}");
        }
    }

    #[test]
    fn spec_json_defaults() {
        let s = GenSpec::from_json(r#"{"articles": 7, "preset": "infeasible-link", "seed": 3}"#).unwrap();
        assert_eq!(s.articles, 7);
        assert_eq!(s.preset, Preset::InfeasibleLink);
        assert_eq!(s.countries, GenSpec::default().countries);
        assert!(GenSpec::from_json(r#"{"artikles": 7}"#).is_err());
    }

    #[test]
    fn hard_preset_violates_lower_targets_at_zero_multipliers() {
        for seed in 0..5 {
            let inst = generate(&GenSpec::new(12, Preset::Hard, seed)).unwrap();
            let eval = evaluate_lr(&inst, &vec![0.0; inst.num_constraints()]).unwrap();
            let res = crate::model::evaluate_linking(&eval.offers, &inst.constraints).unwrap();
            let violated = (0..inst.num_countries()).filter(|c| res[2 * c] > 0.0).count();
            assert!(2 * violated > inst.num_countries(), "seed {seed}: {res:?}");
        }
    }

    #[test]
    fn easy_preset_is_satisfied_at_zero_multipliers() {
        let inst = generate(&GenSpec::new(12, Preset::Easy, 2)).unwrap();
        let eval = evaluate_lr(&inst, &vec![0.0; inst.num_constraints()]).unwrap();
        let res = crate::model::evaluate_linking(&eval.offers, &inst.constraints).unwrap();
        assert!(res.iter().all(|r| *r <= 0.0), "{res:?}");
    }

    #[test]
    fn infeasible_link_pins_multiplier_at_the_box() {
        let inst = generate(&GenSpec::new(8, Preset::InfeasibleLink, 4)).unwrap();
        assert!(inst.constraints[0].target.unwrap() > inst.grid.max_level());
        let cfg = DriverConfig::with_strategy(Strategy::MaxViolation);
        let out = run(&inst, &cfg).unwrap();
        let pinned: Vec<f64> = out.trace.events.iter().filter_map(|e| e.lambda.as_ref().map(|l| l[0])).collect();
        assert!(!pinned.is_empty());
        assert!(pinned.iter().all(|&v| v == inst.lambda_bar), "{pinned:?}");
    }
}
