//! Sample size and power for a two-sided Wald test of ACE = 0, with outcome
//! variances inflated by design effects.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AdjustedVariances, DesignEffectPair, DesignInputs, SampleSizeResult, Validate};
use crate::normal;

/// sigma_a^2 * deff_a for each arm.
pub fn adjusted_variances(
    sigma0sq: f64,
    sigma1sq: f64,
    deff: &DesignEffectPair,
) -> AdjustedVariances {
    AdjustedVariances {
        sigma0adj: sigma0sq * deff.deff0,
        sigma1adj: sigma1sq * deff.deff1,
    }
}

/// Assumptions needed to evaluate power at a given n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerInputs {
    pub alpha: f64,
    pub delta: f64,
    pub k: f64,
    pub sigma0sq: f64,
    pub sigma1sq: f64,
    pub deff: DesignEffectPair,
}

impl From<&DesignInputs> for PowerInputs {
    fn from(d: &DesignInputs) -> Self {
        PowerInputs {
            alpha: d.alpha,
            delta: d.delta,
            k: d.k,
            sigma0sq: d.sigma0sq,
            sigma1sq: d.sigma1sq,
            deff: d.deff,
        }
    }
}

impl PowerInputs {
    fn check(&self) -> Result<()> {
        // Reuse DesignInputs validation with a placeholder power; delta = 0 is
        // allowed here (power then equals alpha).
        let as_design = DesignInputs {
            alpha: self.alpha,
            power: 0.5,
            delta: if self.delta == 0.0 { 1.0 } else { self.delta },
            k: self.k,
            sigma0sq: self.sigma0sq,
            sigma1sq: self.sigma1sq,
            deff: self.deff,
        };
        let v = as_design.violations();
        if v.is_empty() && self.delta.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInputs(
                crate::error::Violations(v).to_string(),
            ))
        }
    }
}

/// Var(ACE-hat) at sample size n: sigma1adj / {n P(A=1)} + sigma0adj / {n P(A=0)}.
pub fn ace_variance(n: f64, k: f64, adj: &AdjustedVariances) -> f64 {
    let p1 = k / (1.0 + k);
    let p0 = 1.0 / (1.0 + k);
    adj.sigma1adj / (n * p1) + adj.sigma0adj / (n * p0)
}

/// Normal-approximation power of the two-sided test at total sample size `n`.
///
/// Both tails are included:
/// `1 - Phi(z_{1-a/2} - delta/sd) + Phi(z_{a/2} - delta/sd)`.
pub fn compute_power(n: u64, inputs: &PowerInputs) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidInputs(format!(
            "n must be at least 2, got {n}"
        )));
    }
    inputs.check()?;
    let adj = adjusted_variances(inputs.sigma0sq, inputs.sigma1sq, &inputs.deff);
    let sd = ace_variance(n as f64, inputs.k, &adj).sqrt();
    let z = normal::quantile(1.0 - inputs.alpha / 2.0)?;
    let shift = inputs.delta / sd;
    Ok(normal::survival(z - shift) + normal::cdf(-z - shift))
}

/// Unrounded sample size
/// `(1 + k)(z_{1-a/2} + z_{1-b})^2 (sigma1adj / k + sigma0adj) / delta^2`.
pub fn raw_sample_size(inputs: &DesignInputs) -> Result<f64> {
    let v = inputs.violations();
    if !v.is_empty() {
        return Err(Error::InvalidInputs(
            crate::error::Violations(v).to_string(),
        ));
    }
    let adj = adjusted_variances(inputs.sigma0sq, inputs.sigma1sq, &inputs.deff);
    let z = normal::quantile(1.0 - inputs.alpha / 2.0)? + normal::quantile(inputs.power)?;
    let k = inputs.k;
    Ok((1.0 + k) * z * z * (adj.sigma1adj / k + adj.sigma0adj) / (inputs.delta * inputs.delta))
}

/// Total sample size rounded up, split across arms in ratio k.
pub fn required_sample_size(inputs: &DesignInputs) -> Result<SampleSizeResult> {
    let raw = raw_sample_size(inputs)?;
    if !raw.is_finite() || raw > 1e15 {
        return Err(Error::InvalidInputs(format!(
            "sample size {raw} is not representable"
        )));
    }
    let n_total = (raw.ceil() as u64).max(2);
    let (n_treated, n_control) = split_by_odds(n_total, inputs.k);
    let achieved_power = compute_power(n_total, &PowerInputs::from(inputs))?;
    Ok(SampleSizeResult {
        n_total,
        n_treated,
        n_control,
        achieved_power,
    })
}

/// Group sizes with `n_treated = round(n k / (1 + k))`, each arm at least one.
pub fn split_by_odds(n_total: u64, k: f64) -> (u64, u64) {
    let treated = (n_total as f64 * k / (1.0 + k)).round() as u64;
    let treated = treated.clamp(1, n_total.saturating_sub(1).max(1));
    (treated, n_total - treated)
}

/// Sample sizes with and without the design effects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleSizeComparison {
    pub adjusted: AdjustedVariances,
    pub with_deff: SampleSizeResult,
    pub naive: SampleSizeResult,
    /// Power of the naive design once weighting is accounted for.
    pub naive_true_power: f64,
}

pub fn compare_with_naive(inputs: &DesignInputs) -> Result<SampleSizeComparison> {
    let with_deff = required_sample_size(inputs)?;
    let naive = required_sample_size(&inputs.naive())?;
    Ok(SampleSizeComparison {
        adjusted: adjusted_variances(inputs.sigma0sq, inputs.sigma1sq, &inputs.deff),
        with_deff,
        naive,
        naive_true_power: compute_power(naive.n_total, &PowerInputs::from(inputs))?,
    })
}
