//! Domain types: discount grids, articles, offers and linking constraints.
//!
//! Linking constraints are stored in a single canonical sense, `A x >= b`.
//! Every constraint is a linear functional of per-country first-week
//! quantities of an offer (sales, revenue, markdown volume and full-price
//! volume), which keeps `A` additive over articles and countries.

mod io;

pub use io::{ConstraintSpec, InstanceFile, FORMAT_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when deciding whether a residual counts as a violation.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Ordered ladder of discount fractions shared by all articles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct DiscountGrid {
    levels: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    levels: Vec<f64>,
}

impl TryFrom<GridRepr> for DiscountGrid {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        DiscountGrid::new(r.levels)
    }
}

impl From<DiscountGrid> for GridRepr {
    fn from(g: DiscountGrid) -> Self {
        GridRepr { levels: g.levels }
    }
}

impl DiscountGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidInput("discount grid needs at least one level".into()));
        }
        if levels[0] != 0.0 {
            return Err(Error::InvalidInput("first discount level must be 0.0".into()));
        }
        if levels.iter().any(|l| !l.is_finite() || *l >= 1.0) {
            return Err(Error::InvalidInput("discount levels must be finite and < 1".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("discount levels must be strictly increasing".into()));
        }
        if levels.len() > u8::MAX as usize {
            return Err(Error::InvalidInput("at most 255 discount levels".into()));
        }
        Ok(Self { levels })
    }

    /// `count` evenly spaced levels from 0 to `max_discount`.
    pub fn uniform(count: usize, max_discount: f64) -> Result<Self> {
        if count == 1 {
            return Self::new(vec![0.0]);
        }
        let step = max_discount / (count - 1) as f64;
        Self::new((0..count).map(|k| k as f64 * step).collect())
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn max_level(&self) -> f64 {
        *self.levels.last().expect("grid is never empty")
    }
}

/// Per-country economics of one article.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountryParams {
    pub base_price: f64,
    pub initial_stock: f64,
    /// Units per week at full price before seasonality.
    pub base_demand: f64,
    pub elasticity: f64,
    pub salvage_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub id: usize,
    pub countries: Vec<CountryParams>,
    /// One multiplier per week; its length is the horizon.
    pub seasonality: Vec<f64>,
    /// Unit cost as a fraction of the base price.
    pub unit_cost: f64,
}

impl Article {
    pub fn horizon(&self) -> usize {
        self.seasonality.len()
    }

    pub fn num_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(format!("article {}: {msg}", self.id)));
        if self.countries.is_empty() {
            return bad("needs at least one country");
        }
        if self.seasonality.is_empty() {
            return bad("horizon must be at least one week");
        }
        if self.seasonality.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return bad("seasonality multipliers must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.unit_cost) {
            return bad("unit cost fraction must lie in [0, 1)");
        }
        for c in &self.countries {
            if !(c.base_price.is_finite() && c.base_price > 0.0) {
                return bad("base price must be positive");
            }
            if !(c.initial_stock.is_finite() && c.initial_stock >= 0.0) {
                return bad("initial stock must be non-negative");
            }
            if c.initial_stock.fract() != 0.0 {
                return bad("initial stock must be integral");
            }
            if !(c.base_demand.is_finite() && c.base_demand >= 0.0) {
                return bad("base demand must be non-negative");
            }
            if !(c.elasticity.is_finite() && c.elasticity >= 0.0) {
                return bad("elasticity must be non-negative");
            }
            if !(0.0..1.0).contains(&c.salvage_fraction) {
                return bad("salvage fraction must lie in [0, 1)");
            }
        }
        Ok(())
    }
}

/// First-week quantities of an offer in one country; the inputs to every
/// linking functional.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstWeek {
    pub sales: f64,
    pub price: f64,
    pub base_price: f64,
}

/// Coefficients of a linking functional over first-week quantities.
///
/// With `s` first-week sales, `x` first-week price and `p` base price the
/// functional evaluates `sales*s + revenue*x*s + markdown*(p-x)*s + full_value*p*s`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights {
    #[serde(default)]
    pub sales: f64,
    #[serde(default)]
    pub revenue: f64,
    #[serde(default)]
    pub markdown: f64,
    #[serde(default)]
    pub full_value: f64,
}

impl FeatureWeights {
    pub fn eval(&self, fw: &FirstWeek) -> f64 {
        let s = fw.sales;
        self.sales * s
            + self.revenue * (fw.price * s)
            + self.markdown * ((fw.base_price - fw.price) * s)
            + self.full_value * (fw.base_price * s)
    }

    pub fn negated(&self) -> Self {
        Self {
            sales: -self.sales,
            revenue: -self.revenue,
            markdown: -self.markdown,
            full_value: -self.full_value,
        }
    }

    fn is_finite(&self) -> bool {
        [self.sales, self.revenue, self.markdown, self.full_value]
            .iter()
            .all(|w| w.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    SdrLower,
    SdrUpper,
    CustomLinear,
}

/// A linking constraint before canonicalization.
#[derive(Clone, Debug, PartialEq)]
pub struct RawConstraint {
    pub kind: ConstraintKind,
    /// `None` sums the functional over all countries.
    pub country: Option<usize>,
    pub target: Option<f64>,
    pub sense: Sense,
    pub weights: FeatureWeights,
    pub rhs: f64,
}

impl RawConstraint {
    /// Sales-weighted discount rate of `country` at least `target`.
    pub fn sdr_lower(country: usize, target: f64) -> Self {
        Self {
            kind: ConstraintKind::SdrLower,
            country: Some(country),
            target: Some(target),
            sense: Sense::Ge,
            weights: FeatureWeights { markdown: 1.0, full_value: -target, ..Default::default() },
            rhs: 0.0,
        }
    }

    /// Sales-weighted discount rate of `country` at most `target`.
    pub fn sdr_upper(country: usize, target: f64) -> Self {
        Self {
            kind: ConstraintKind::SdrUpper,
            country: Some(country),
            target: Some(target),
            sense: Sense::Le,
            weights: FeatureWeights { markdown: 1.0, full_value: -target, ..Default::default() },
            rhs: 0.0,
        }
    }

    pub fn custom(country: Option<usize>, weights: FeatureWeights, sense: Sense, rhs: f64) -> Self {
        Self { kind: ConstraintKind::CustomLinear, country, target: None, sense, weights, rhs }
    }
}

/// A linking constraint in canonical form `sum_i contribution_i >= rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkingConstraint {
    pub kind: ConstraintKind,
    pub country: Option<usize>,
    pub target: Option<f64>,
    pub weights: FeatureWeights,
    pub rhs: f64,
}

/// Brings a raw constraint into `>=` form, negating row and rhs of `<=` inputs.
pub fn canonicalize(raw: &RawConstraint) -> Result<LinkingConstraint> {
    if !raw.rhs.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite constraint rhs {}", raw.rhs)));
    }
    if !raw.weights.is_finite() {
        return Err(Error::InvalidInput("non-finite constraint coefficients".into()));
    }
    if let Some(t) = raw.target {
        if !(0.0..1.0).contains(&t) {
            return Err(Error::InvalidInput(format!("sDR target {t} outside [0, 1)")));
        }
    }
    let (weights, rhs) = match raw.sense {
        Sense::Ge => (raw.weights, raw.rhs),
        // adding 0.0 turns -0.0 into 0.0
        Sense::Le => (raw.weights.negated(), -raw.rhs + 0.0),
    };
    Ok(LinkingConstraint { kind: raw.kind, country: raw.country, target: raw.target, weights, rhs })
}

impl LinkingConstraint {
    /// The term this constraint receives from one country of one offer.
    pub fn term(&self, country: usize, fw: &FirstWeek) -> f64 {
        match self.country {
            Some(c) if c != country => 0.0,
            _ => self.weights.eval(fw),
        }
    }

    /// The article's additive term `(A_i x_i)_l`, summed over countries in order.
    pub fn contribution(&self, first_weeks: &[FirstWeek]) -> f64 {
        first_weeks
            .iter()
            .enumerate()
            .fold(0.0, |acc, (c, fw)| acc + self.term(c, fw))
    }

    /// Original-sense view, used when writing instances back out.
    pub fn to_raw(&self) -> RawConstraint {
        match self.kind {
            ConstraintKind::SdrUpper => RawConstraint {
                kind: self.kind,
                country: self.country,
                target: self.target,
                sense: Sense::Le,
                weights: self.weights.negated(),
                rhs: -self.rhs + 0.0,
            },
            _ => RawConstraint {
                kind: self.kind,
                country: self.country,
                target: self.target,
                sense: Sense::Ge,
                weights: self.weights,
                rhs: self.rhs,
            },
        }
    }
}

/// The linearized sDR term of an offer for an sDR constraint; 0 for other kinds.
pub fn sdr_contribution(offer: &Offer, constraint: &LinkingConstraint) -> f64 {
    match constraint.kind {
        ConstraintKind::SdrLower | ConstraintKind::SdrUpper => {
            constraint.contribution(&offer.first_weeks())
        }
        ConstraintKind::CustomLinear => 0.0,
    }
}

/// One article's full decision with cached profit and linking contributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub article_id: usize,
    /// Grid index per country and week, non-decreasing over weeks.
    pub discount_index: Vec<Vec<u8>>,
    pub profit: f64,
    pub contributions: Vec<f64>,
    pub first_week_sales: Vec<f64>,
    pub first_week_price: Vec<f64>,
    pub base_price: Vec<f64>,
}

impl Offer {
    pub fn first_weeks(&self) -> Vec<FirstWeek> {
        (0..self.first_week_sales.len())
            .map(|c| FirstWeek {
                sales: self.first_week_sales[c],
                price: self.first_week_price[c],
                base_price: self.base_price[c],
            })
            .collect()
    }

    /// `f_i + lambda^T A_i x_i`.
    pub fn lagrangian_value(&self, lambda: &[f64]) -> f64 {
        self.profit + dot(lambda, &self.contributions)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub articles: Vec<Article>,
    pub grid: DiscountGrid,
    pub constraints: Vec<LinkingConstraint>,
    pub lambda_bar: f64,
    pub seed: u64,
}

impl Instance {
    pub fn num_articles(&self) -> usize {
        self.articles.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn rhs(&self) -> Vec<f64> {
        self.constraints.iter().map(|c| c.rhs).collect()
    }

    pub fn num_countries(&self) -> usize {
        self.articles.iter().map(|a| a.num_countries()).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_bar.is_finite() && self.lambda_bar > 0.0) {
            return Err(Error::InvalidInput(format!("lambda_bar must be positive, got {}", self.lambda_bar)));
        }
        for (i, a) in self.articles.iter().enumerate() {
            if a.id != i {
                return Err(Error::InvalidInput(format!("article at position {i} has id {}", a.id)));
            }
            a.validate()?;
        }
        for (l, c) in self.constraints.iter().enumerate() {
            if matches!(c.kind, ConstraintKind::SdrLower | ConstraintKind::SdrUpper) && c.country.is_none() {
                return Err(Error::InvalidInput(format!("sDR constraint {l} has no country")));
            }
            if let Some(country) = c.country {
                if self.articles.iter().any(|a| country >= a.num_countries()) {
                    return Err(Error::InvalidInput(format!(
                        "constraint {l} references country {country} missing from some article"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// Sum of per-article contributions, in article order.
pub fn total_contribution<'a, I>(contributions: I, num_constraints: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut total = vec![0.0; num_constraints];
    for c in contributions {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    total
}

/// Residual `b - A x` per linking constraint; positive entries are violations.
pub fn evaluate_linking(offers: &[Offer], constraints: &[LinkingConstraint]) -> Result<Vec<f64>> {
    let l = constraints.len();
    for o in offers {
        if o.contributions.len() != l {
            return Err(Error::DimensionMismatch {
                what: "offer contributions",
                expected: l,
                actual: o.contributions.len(),
            });
        }
    }
    let total = total_contribution(offers.iter().map(|o| o.contributions.as_slice()), l);
    Ok(constraints.iter().zip(total).map(|(c, t)| c.rhs - t).collect())
}

/// Whether a residual counts as satisfied given the magnitude of the terms
/// that produced it.
pub fn residual_satisfied(residual: f64, magnitude: f64) -> bool {
    residual <= FEASIBILITY_TOL * (1.0 + magnitude)
}

/// Sum of absolute contributions plus |rhs| per constraint; the scale for
/// [`residual_satisfied`].
pub fn residual_magnitude<'a, I>(contributions: I, rhs: &[f64]) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut mag: Vec<f64> = rhs.iter().map(|b| b.abs()).collect();
    for c in contributions {
        for (m, v) in mag.iter_mut().zip(c) {
            *m += v.abs();
        }
    }
    mag
}
