//! TOML input files. Each workflow has its own file shape; see
//! the "Configuration files" section of the README for the key vocabulary.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::pilot::{DataSchema, MissingPolicy};
use crate::deff::closed_form_pair;
use crate::error::{Error, Result};
use crate::estimation::ModelTerms;
use crate::model::{
    Cell, CellOutcome, DeffMethod, DesignEffectPair, DesignInputs, JointDistribution, OutcomeLaw,
    PilotDataset, ScenarioSpec, Validate,
};
use crate::simulation::{ResampleSpec, ShiftRule};

pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

pub fn read_toml<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Joint law of confounder cells and treatment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointFile {
    #[serde(default)]
    pub name: Option<String>,
    pub cells: Vec<Cell>,
}

impl JointFile {
    pub fn into_joint(self) -> Result<JointDistribution> {
        JointDistribution::new(self.cells).map_err(Error::Invalid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioCell {
    #[serde(default)]
    pub label: Option<String>,
    pub p_l: f64,
    pub p_a1_given_l: f64,
    pub y0: OutcomeLaw,
    pub y1: OutcomeLaw,
}

/// Generative scenario: cells with per-cell potential-outcome laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub delta: f64,
    pub cells: Vec<ScenarioCell>,
}

impl ScenarioFile {
    pub fn into_spec(self) -> Result<ScenarioSpec> {
        let mut cells = Vec::with_capacity(self.cells.len());
        let mut outcomes = Vec::with_capacity(self.cells.len());
        for (i, c) in self.cells.into_iter().enumerate() {
            cells.push(Cell {
                label: c.label.unwrap_or_else(|| format!("L={i}")),
                p_l: c.p_l,
                p_a1_given_l: c.p_a1_given_l,
            });
            outcomes.push(CellOutcome { y0: c.y0, y1: c.y1 });
        }
        ScenarioSpec {
            name: self.name,
            joint: JointDistribution { cells },
            outcomes,
            delta: self.delta,
        }
        .validate()
        .map_err(Error::Invalid)
    }

    pub fn from_spec(spec: &ScenarioSpec) -> Self {
        ScenarioFile {
            name: spec.name.clone(),
            delta: spec.delta,
            cells: spec
                .joint
                .cells
                .iter()
                .zip(&spec.outcomes)
                .map(|(c, o)| ScenarioCell {
                    label: Some(c.label.clone()),
                    p_l: c.p_l,
                    p_a1_given_l: c.p_a1_given_l,
                    y0: o.y0,
                    y1: o.y1,
                })
                .collect(),
        }
    }
}

/// Where the design effects of a design-inputs file come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeffSource {
    /// Closed form from an assumed joint law.
    Joint { cells: Vec<Cell> },
    /// Values entered directly, e.g. from a pilot study.
    Values {
        deff0: f64,
        deff1: f64,
        #[serde(default)]
        method: Option<DeffMethod>,
    },
}

fn default_alpha() -> f64 {
    0.05
}

fn default_power() -> f64 {
    0.8
}

/// Inputs for `samplesize` and `power`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignInputsFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_power")]
    pub power: f64,
    pub delta: f64,
    /// Treatment odds P(A=1)/P(A=0); taken from `deff.cells` when omitted.
    #[serde(default)]
    pub k: Option<f64>,
    #[serde(default)]
    pub p_treated: Option<f64>,
    pub sigma0sq: f64,
    pub sigma1sq: f64,
    /// Omit for an unweighted (randomized) design.
    #[serde(default)]
    pub deff: Option<DeffSource>,
}

impl DesignInputsFile {
    pub fn into_inputs(self) -> Result<DesignInputs> {
        let (deff, joint_odds) = match self.deff {
            None => (DesignEffectPair::none(), None),
            Some(DeffSource::Values {
                deff0,
                deff1,
                method,
            }) => {
                let method = method.unwrap_or(DeffMethod::Assumed);
                if method == DeffMethod::FullWithRemainder {
                    return Err(Error::Config(
                        "method full_with_remainder needs a scenario file".into(),
                    ));
                }
                let pair = DesignEffectPair {
                    deff0,
                    deff1,
                    method,
                    remainder0: None,
                    remainder1: None,
                };
                (pair, None)
            }
            Some(DeffSource::Joint { cells }) => {
                let joint = JointDistribution::new(cells).map_err(Error::Invalid)?;
                (closed_form_pair(&joint)?, Some(joint.treatment_odds()))
            }
        };
        let k = match (self.k, self.p_treated, joint_odds) {
            (Some(k), None, _) => k,
            (None, Some(p), _) if p > 0.0 && p < 1.0 => p / (1.0 - p),
            (None, Some(p), _) => {
                return Err(Error::Config(format!("p_treated {p} outside (0, 1)")))
            }
            (None, None, Some(k)) => k,
            (None, None, None) => {
                return Err(Error::Config("one of k or p_treated is required".into()))
            }
            (Some(_), Some(_), _) => {
                return Err(Error::Config("give k or p_treated, not both".into()))
            }
        };
        let inputs = DesignInputs {
            alpha: self.alpha,
            power: self.power,
            delta: self.delta,
            k,
            sigma0sq: self.sigma0sq,
            sigma1sq: self.sigma1sq,
            deff,
        };
        let v = inputs.violations();
        if v.is_empty() {
            Ok(inputs)
        } else {
            Err(Error::Invalid(crate::error::Violations(v)))
        }
    }
}

/// Column mapping plus propensity terms, for `deff pilot`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermsFile {
    pub schema: DataSchema,
    #[serde(default)]
    pub terms: ModelTerms,
    #[serde(default)]
    pub missing: MissingPolicy,
}

/// Settings for `simulate resample`; the data file is given separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResampleFile {
    pub name: String,
    pub schema: DataSchema,
    #[serde(default)]
    pub propensity_terms: ModelTerms,
    #[serde(default)]
    pub outcome_terms: ModelTerms,
    pub target_ace: f64,
    #[serde(default)]
    pub shift_rule: ShiftRule,
    #[serde(default)]
    pub sigma0sq: Option<f64>,
    #[serde(default)]
    pub sigma1sq: Option<f64>,
    #[serde(default)]
    pub missing: MissingPolicy,
}

impl ResampleFile {
    pub fn into_spec(self, base_data: PilotDataset) -> ResampleSpec {
        ResampleSpec {
            name: self.name,
            base_data,
            propensity_terms: self.propensity_terms,
            outcome_terms: self.outcome_terms,
            target_ace: self.target_ace,
            shift_rule: self.shift_rule,
            sigma0sq: self.sigma0sq,
            sigma1sq: self.sigma1sq,
        }
    }
}
