//! Report records and their text rendering.
//!
//! Every command produces a [`Report`]: the structured record carries the
//! inputs, the seed (for simulations) and the toolkit version at full
//! precision. The text form rounds design effects to 2 decimals and
//! variances to 4.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::design::{PowerInputs, SampleSizeComparison};
use crate::error::{Error, Result};
use crate::model::{Arm, DesignEffectPair, DesignInputs, SimulationReport};
use crate::weightgen::WeightSample;

pub const TOOL: &str = "ipw-design";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Value,
    pub result: Value,
    #[serde(skip)]
    pub text: String,
}

fn to_value<T: Serialize + ?Sized>(v: &T) -> Result<Value> {
    serde_json::to_value(v)
        .map_err(|e| Error::InvalidInputs(format!("cannot serialize report: {e}")))
}

impl Report {
    pub fn new<I, R>(command: &str, inputs: &I, result: &R, text: String) -> Result<Self>
    where
        I: Serialize + ?Sized,
        R: Serialize + ?Sized,
    {
        Ok(Report {
            tool: TOOL.to_string(),
            version: crate::VERSION.to_string(),
            command: command.to_string(),
            seed: None,
            inputs: to_value(inputs)?,
            result: to_value(result)?,
            text,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report values are plain JSON")
    }
}

pub fn fmt_deff(x: f64) -> String {
    format!("{x:.2}")
}

pub fn fmt_var(x: f64) -> String {
    format!("{x:.4}")
}

/// Design effects for the requested arms.
pub fn deff_text(pair: &DesignEffectPair, arms: &[Arm]) -> String {
    let mut s = String::new();
    let method = serde_json::to_value(pair.method)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default();
    writeln!(s, "design effect due to weighting ({method})").unwrap();
    for &arm in arms {
        write!(s, "  deff{} = {}", arm.index(), fmt_deff(pair.get(arm))).unwrap();
        if let Some(r) = pair.remainder(arm) {
            write!(s, "  (remainder {})", fmt_deff(r)).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn sample_size_text(inputs: &DesignInputs, cmp: &SampleSizeComparison) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "alpha = {}, power = {}, delta = {}, k = {:.4}",
        inputs.alpha, inputs.power, inputs.delta, inputs.k
    )
    .unwrap();
    writeln!(
        s,
        "deff0 = {}, deff1 = {}",
        fmt_deff(inputs.deff.deff0),
        fmt_deff(inputs.deff.deff1)
    )
    .unwrap();
    writeln!(
        s,
        "sigma0^2 = {}, sigma1^2 = {}",
        fmt_var(inputs.sigma0sq),
        fmt_var(inputs.sigma1sq)
    )
    .unwrap();
    writeln!(
        s,
        "sigma0^2 adj = {}, sigma1^2 adj = {}",
        fmt_var(cmp.adjusted.sigma0adj),
        fmt_var(cmp.adjusted.sigma1adj)
    )
    .unwrap();
    let w = &cmp.with_deff;
    writeln!(
        s,
        "n_deff = {} (treated {}, control {}), power {:.3}",
        w.n_total, w.n_treated, w.n_control, w.achieved_power
    )
    .unwrap();
    let r = &cmp.naive;
    writeln!(
        s,
        "n_rct  = {} (treated {}, control {}), power {:.3} ignoring weights, {:.3} with weights",
        r.n_total, r.n_treated, r.n_control, r.achieved_power, cmp.naive_true_power
    )
    .unwrap();
    s
}

pub fn power_text(n: u64, power: f64, inputs: &PowerInputs) -> String {
    format!(
        "n = {n}, delta = {}, deff0 = {}, deff1 = {}: power = {power:.4}\n",
        inputs.delta,
        fmt_deff(inputs.deff.deff0),
        fmt_deff(inputs.deff.deff1)
    )
}

pub fn simulation_text(r: &SimulationReport) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{}: n = {}, R = {}, seed = {}",
        r.scenario, r.n_used, r.replications, r.seed
    )
    .unwrap();
    writeln!(
        s,
        "empirical power = {:.3} (MC s.e. {:.4}; {} of {} completed fits rejected, {} failed)",
        r.empirical_power, r.mc_stderr, r.rejections, r.completed, r.failed
    )
    .unwrap();
    writeln!(
        s,
        "mean Er0 = {}, mean Er1 = {}",
        fmt_deff(r.mean_er0),
        fmt_deff(r.mean_er1)
    )
    .unwrap();
    writeln!(
        s,
        "true ACE = {:.4}, sandwich var = {:.6}, empirical var = {:.6}, coverage = {:.3}",
        r.true_ace, r.mean_sandwich_var, r.empirical_var, r.coverage
    )
    .unwrap();
    s
}

pub fn weights_text(w: &WeightSample) -> String {
    format!(
        "target deff = {}, beta shape = {:.4}, realized deff = {} (n = {}, attempts = {})\n",
        fmt_deff(w.target_deff),
        w.alpha,
        fmt_deff(w.realized_deff),
        w.weights.len(),
        w.attempts
    )
}
