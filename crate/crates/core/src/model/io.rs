//! JSON instance file format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    canonicalize, Article, ConstraintKind, DiscountGrid, FeatureWeights, Instance, RawConstraint, Sense,
};
use crate::error::{Error, Result};
use crate::subproblem;

pub const FORMAT_VERSION: u32 = 1;

/// Constraint as written in an instance file, in its original sense.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSpec {
    SdrLower {
        country: usize,
        target: f64,
    },
    SdrUpper {
        country: usize,
        target: f64,
    },
    Custom {
        #[serde(default)]
        country: Option<usize>,
        sense: Sense,
        weights: FeatureWeights,
        rhs: f64,
    },
}

impl ConstraintSpec {
    pub fn to_raw(&self) -> RawConstraint {
        match *self {
            ConstraintSpec::SdrLower { country, target } => RawConstraint::sdr_lower(country, target),
            ConstraintSpec::SdrUpper { country, target } => RawConstraint::sdr_upper(country, target),
            ConstraintSpec::Custom { country, sense, weights, rhs } => {
                RawConstraint::custom(country, weights, sense, rhs)
            }
        }
    }

    fn from_raw(raw: &RawConstraint) -> Self {
        match (raw.kind, raw.country, raw.target) {
            (ConstraintKind::SdrLower, Some(country), Some(target)) => ConstraintSpec::SdrLower { country, target },
            (ConstraintKind::SdrUpper, Some(country), Some(target)) => ConstraintSpec::SdrUpper { country, target },
            _ => ConstraintSpec::Custom {
                country: raw.country,
                sense: raw.sense,
                weights: raw.weights,
                rhs: raw.rhs,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub format: u32,
    pub seed: u64,
    /// Multiplier box; the instance-scaled default is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_bar: Option<f64>,
    pub grid: DiscountGrid,
    pub articles: Vec<Article>,
    pub constraints: Vec<ConstraintSpec>,
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<Instance> {
        if self.format != FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported instance format {} (expected {FORMAT_VERSION})",
                self.format
            )));
        }
        let constraints = self
            .constraints
            .iter()
            .map(|c| canonicalize(&c.to_raw()))
            .collect::<Result<Vec<_>>>()?;
        for a in &self.articles {
            a.validate()?;
        }
        let lambda_bar = match self.lambda_bar {
            Some(v) => v,
            None => subproblem::default_lambda_bar(&self.articles, &self.grid, &constraints, subproblem::DEFAULT_PATH_CAP)?,
        };
        let instance = Instance { articles: self.articles, grid: self.grid, constraints, lambda_bar, seed: self.seed };
        instance.validate()?;
        Ok(instance)
    }
}

impl Instance {
    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            format: FORMAT_VERSION,
            seed: self.seed,
            lambda_bar: Some(self.lambda_bar),
            grid: self.grid.clone(),
            articles: self.articles.clone(),
            constraints: self.constraints.iter().map(|c| ConstraintSpec::from_raw(&c.to_raw())).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<InstanceFile>(text)?.into_instance()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CountryParams;

    fn tiny() -> InstanceFile {
        InstanceFile {
            format: FORMAT_VERSION,
            seed: 7,
            lambda_bar: None,
            grid: DiscountGrid::new(vec![0.0, 0.2, 0.4]).unwrap(),
            articles: vec![Article {
                id: 0,
                countries: vec![CountryParams {
                    base_price: 40.0,
                    initial_stock: 30.0,
                    base_demand: 5.0,
                    elasticity: 2.0,
                    salvage_fraction: 0.1,
                }],
                seasonality: vec![1.0, 0.8],
                unit_cost: 0.3,
            }],
            constraints: vec![
                ConstraintSpec::SdrLower { country: 0, target: 0.1 },
                ConstraintSpec::Custom {
                    country: None,
                    sense: Sense::Le,
                    weights: FeatureWeights { sales: 1.0, ..Default::default() },
                    rhs: 12.0,
                },
            ],
        }
    }

    #[test]
    fn load_canonicalizes_and_fills_lambda_bar() {
        let inst = tiny().into_instance().unwrap();
        assert_eq!(inst.constraints[1].rhs, -12.0);
        assert!(inst.lambda_bar >= 10.0);
    }

    #[test]
    fn save_load_roundtrip_is_semantic_identity() {
        let inst = tiny().into_instance().unwrap();
        let again = Instance::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(inst, again);
        assert_eq!(inst.to_json().unwrap(), again.to_json().unwrap());
    }

    #[test]
    fn rejects_wrong_format_version() {
        let mut f = tiny();
        f.format = 2;
        assert!(f.into_instance().is_err());
    }

    #[test]
    fn rejects_bad_country_reference() {
        let mut f = tiny();
        f.constraints.push(ConstraintSpec::SdrUpper { country: 3, target: 0.5 });
        assert!(f.into_instance().is_err());
    }
}
