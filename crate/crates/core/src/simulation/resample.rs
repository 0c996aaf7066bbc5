//! Simulation built from an existing dataset: propensities and per-arm
//! outcome regressions fitted on the base data define a population that is
//! resampled with replacement, with fresh treatments and outcome noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::rng::seed_stream;
use super::{aggregate, run_replications, ReplicationOutcome, SimulationConfig};
use crate::deff::{remainder_estimate_from_sample, RemainderUnit};
use crate::error::{Error, Result};
use crate::estimation::{
    analyze_system, fit_ols, fit_propensity, hajek_means, iptw_weights, potential_outcome_moments,
    wald_test, DesignMatrix, DesignSpec, ModelTerms, StackedSystem,
};
use crate::model::{Arm, PilotDataset, SimulationReport, Validate, WeightTreatment};
use crate::normal;

/// How the control-arm predictions are shifted to reach the target effect.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftRule {
    /// Add (mean of Yhat1 - Yhat0) - target, so the simulated population's
    /// ACE equals the target exactly.
    #[default]
    PopulationMean,
    /// Add (IPTW estimate on the base data) - target.
    ObservedIptw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleSpec {
    pub name: String,
    /// Base dataset with outcomes and both arms.
    pub base_data: PilotDataset,
    pub propensity_terms: ModelTerms,
    pub outcome_terms: ModelTerms,
    pub target_ace: f64,
    #[serde(default)]
    pub shift_rule: ShiftRule,
    /// Design-phase Var(Y0); estimated from the base data when absent.
    #[serde(default)]
    pub sigma0sq: Option<f64>,
    #[serde(default)]
    pub sigma1sq: Option<f64>,
}

/// The fitted population the replications draw from.
#[derive(Debug, Clone, PartialEq)]
pub struct ResamplePopulation {
    /// Propensity regressors of every base row.
    pub design: DesignMatrix,
    pub p_hat: Vec<f64>,
    /// Shifted control predictions.
    pub yhat0: Vec<f64>,
    pub yhat1: Vec<f64>,
    pub mse0: f64,
    pub mse1: f64,
    /// IPTW estimate of the ACE on the base data.
    pub observed_ace: f64,
    /// Amount added to every control prediction.
    pub shift: f64,
    /// ACE of the simulated population.
    pub true_ace: f64,
    pub sigma_sq: [f64; 2],
}

/// Fits the propensity and per-arm outcome models on the base data and
/// applies the shift.
pub fn prepare_resample(spec: &ResampleSpec) -> Result<ResamplePopulation> {
    let data = spec.base_data.clone().validate().map_err(Error::Invalid)?;
    if !data.has_outcomes() {
        let i = data.rows.iter().position(|r| r.y.is_none()).unwrap_or(0);
        return Err(Error::MissingOutcome(i));
    }
    let propensity = fit_propensity(&data, &spec.propensity_terms)?;
    let weights = iptw_weights(&propensity, &data)?;
    let p_hat = propensity.predict(&data)?;
    let observed_ace = hajek_means(&data, &weights)?.ace_hat;

    let outcome_spec = DesignSpec::resolve(&spec.outcome_terms, &data)?;
    let outcome_x = outcome_spec.matrix(&data)?;
    let y: Vec<f64> = data.rows.iter().map(|r| r.y.unwrap_or_default()).collect();
    let mut predictions = [Vec::new(), Vec::new()];
    let mut mse = [0.0; 2];
    for arm in Arm::BOTH {
        let in_arm = |i: usize| data.rows[i].a == arm;
        let x_arm = outcome_x.select(in_arm);
        let y_arm: Vec<f64> = (0..data.len())
            .filter(|&i| in_arm(i))
            .map(|i| y[i])
            .collect();
        let fit = fit_ols(&x_arm, &y_arm)?;
        predictions[arm.index()] = outcome_x.iter_rows().map(|r| fit.predict_row(r)).collect();
        mse[arm.index()] = fit.mse;
    }
    let [mut yhat0, yhat1] = predictions;
    let n = data.len() as f64;
    let regression_ace = yhat1.iter().zip(&yhat0).map(|(a, b)| a - b).sum::<f64>() / n;
    let shift = match spec.shift_rule {
        ShiftRule::PopulationMean => regression_ace - spec.target_ace,
        ShiftRule::ObservedIptw => observed_ace - spec.target_ace,
    };
    for v in &mut yhat0 {
        *v += shift;
    }
    let true_ace = regression_ace - shift;

    let sigma_sq = match (spec.sigma0sq, spec.sigma1sq) {
        (Some(s0), Some(s1)) => [s0, s1],
        (s0, s1) => {
            let m = potential_outcome_moments(&data, &weights)?;
            [s0.unwrap_or(m.var0), s1.unwrap_or(m.var1)]
        }
    };
    if sigma_sq.iter().any(|s| s.is_nan() || *s <= 0.0) {
        return Err(Error::InvalidInputs(format!(
            "design variances must be positive, got {sigma_sq:?}"
        )));
    }

    Ok(ResamplePopulation {
        design: propensity.design_spec.matrix(&data)?,
        p_hat,
        yhat0,
        yhat1,
        mse0: mse[0],
        mse1: mse[1],
        observed_ace,
        shift,
        true_ace,
        sigma_sq,
    })
}

impl ResamplePopulation {
    pub fn len(&self) -> usize {
        self.p_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_hat.is_empty()
    }

    fn replicate<R: Rng>(&self, n: usize, alpha: f64, rng: &mut R) -> Result<ReplicationOutcome> {
        let noise0 =
            Normal::new(0.0, self.mse0.sqrt()).map_err(|e| Error::InvalidInputs(e.to_string()))?;
        let noise1 =
            Normal::new(0.0, self.mse1.sqrt()).map_err(|e| Error::InvalidInputs(e.to_string()))?;
        let cols = self.design.cols;
        let mut values = Vec::with_capacity(n * cols);
        let mut a = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut y0 = Vec::with_capacity(n);
        let mut y1 = Vec::with_capacity(n);
        for _ in 0..n {
            let i = rng.random_range(0..self.len());
            values.extend_from_slice(self.design.row(i));
            let treated = rng.random::<f64>() < self.p_hat[i];
            let v0 = self.yhat0[i] + noise0.sample(rng);
            let v1 = self.yhat1[i] + noise1.sample(rng);
            a.push(treated as u8 as f64);
            y.push(if treated { v1 } else { v0 });
            y0.push(v0);
            y1.push(v1);
        }
        let x = DesignMatrix {
            rows: n,
            cols,
            values,
        };
        let system = StackedSystem::new(x, a.clone(), y)?;
        let analysis = analyze_system(&system, WeightTreatment::Estimated)?;
        let test = wald_test(&analysis.fit, alpha)?;

        let treated_share = a.iter().sum::<f64>() / n as f64;
        let mut er = [0.0; 2];
        for (arm, ya) in [(Arm::Control, &y0), (Arm::Treated, &y1)] {
            let units: Vec<RemainderUnit> = analysis
                .p_hat
                .iter()
                .zip(ya.iter())
                .map(|(&ph, &v)| RemainderUnit {
                    arm_weight: 1.0 / arm.probability(ph),
                    outcome: Some(v),
                })
                .collect();
            let share = arm.probability(treated_share);
            er[arm.index()] =
                remainder_estimate_from_sample(&units, share, self.sigma_sq[arm.index()])?;
        }
        let var = analysis.fit.var_ace();
        let half_width = normal::quantile(1.0 - alpha / 2.0)? * var.sqrt();
        Ok(ReplicationOutcome {
            reject: test.reject,
            er0: er[0],
            er1: er[1],
            ace: analysis.fit.beta1,
            var_ace: var,
            covered: (analysis.fit.beta1 - self.true_ace).abs() <= half_width,
        })
    }
}

/// Empirical power for samples of size `config.n` resampled from a base dataset.
pub fn run_resample_power(
    spec: &ResampleSpec,
    config: &SimulationConfig,
) -> Result<SimulationReport> {
    config.check()?;
    let population = prepare_resample(spec)?;
    run_prepared(&spec.name, &population, config)
}

/// Runs replications against an already prepared population.
pub fn run_prepared(
    name: &str,
    population: &ResamplePopulation,
    config: &SimulationConfig,
) -> Result<SimulationReport> {
    config.check()?;
    let results = run_replications(config, |rep| {
        let mut rng = seed_stream(config.seed, rep);
        population.replicate(config.n, config.alpha, &mut rng)
    })?;
    aggregate(name, config, population.true_ace, results)
}
