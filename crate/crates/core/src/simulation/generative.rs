use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::rng::{seed_stream, SUPERPOPULATION_STREAM};
use super::{aggregate, run_replications, ReplicationOutcome, SimulationConfig};
use crate::deff::{remainder_estimate_from_sample, RemainderUnit};
use crate::error::{Error, Result};
use crate::estimation::{analyze_system, wald_test, DesignMatrix, StackedSystem};
use crate::model::{Arm, OutcomeLaw, ScenarioSpec, SimulationReport, Validate, WeightTreatment};
use crate::normal;

/// Finite population of (L, A, Y0, Y1); the observed Y follows from A.
#[derive(Debug, Clone, PartialEq)]
pub struct Superpopulation {
    pub cell: Vec<u32>,
    pub treated: Vec<bool>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub cells: usize,
}

impl Superpopulation {
    pub fn len(&self) -> usize {
        self.cell.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell.is_empty()
    }

    /// Observed outcome, `A Y1 + (1 - A) Y0`.
    pub fn y(&self, i: usize) -> f64 {
        if self.treated[i] {
            self.y1[i]
        } else {
            self.y0[i]
        }
    }

    pub fn potential(&self, arm: Arm, i: usize) -> f64 {
        match arm {
            Arm::Control => self.y0[i],
            Arm::Treated => self.y1[i],
        }
    }

    /// Population average causal effect.
    pub fn ace(&self) -> f64 {
        let n = self.len() as f64;
        self.y1
            .iter()
            .zip(&self.y0)
            .map(|(a, b)| a - b)
            .sum::<f64>()
            / n
    }

    pub fn treated_fraction(&self) -> f64 {
        self.treated.iter().filter(|&&t| t).count() as f64 / self.len() as f64
    }

    /// Propensity regressors for unit i: intercept plus one indicator per
    /// non-reference cell, which makes the logistic model saturated in L.
    fn fill_regressors(&self, i: usize, row: &mut [f64]) {
        row.fill(0.0);
        row[0] = 1.0;
        let c = self.cell[i] as usize;
        if c > 0 {
            row[c] = 1.0;
        }
    }
}

fn draw_outcome<R: Rng>(law: &OutcomeLaw, rng: &mut R) -> f64 {
    match *law {
        OutcomeLaw::Bernoulli { p } => (rng.random::<f64>() < p) as u8 as f64,
        OutcomeLaw::Normal { mean, variance } => Normal::new(mean, variance.sqrt())
            .expect("validated variance")
            .sample(rng),
    }
}

/// Draws L from its marginal, A | L, and both potential outcomes given L.
pub fn generate_superpopulation(
    spec: &ScenarioSpec,
    size: usize,
    seed: u64,
) -> Result<Superpopulation> {
    let spec = spec.clone().validate().map_err(Error::Invalid)?;
    let mut rng = seed_stream(seed, SUPERPOPULATION_STREAM);
    let total = spec.joint.total_mass();
    let mut cumulative = Vec::with_capacity(spec.joint.len());
    let mut acc = 0.0;
    for c in &spec.joint.cells {
        acc += c.p_l / total;
        cumulative.push(acc);
    }
    let last = cumulative.len() - 1;
    let mut pop = Superpopulation {
        cell: Vec::with_capacity(size),
        treated: Vec::with_capacity(size),
        y0: Vec::with_capacity(size),
        y1: Vec::with_capacity(size),
        cells: spec.joint.len(),
    };
    for _ in 0..size {
        let u: f64 = rng.random();
        let c = cumulative.iter().position(|&q| u < q).unwrap_or(last);
        let cell = &spec.joint.cells[c];
        let outcome = &spec.outcomes[c];
        pop.cell.push(c as u32);
        pop.treated.push(rng.random::<f64>() < cell.p_a1_given_l);
        pop.y0.push(draw_outcome(&outcome.y0, &mut rng));
        pop.y1.push(draw_outcome(&outcome.y1, &mut rng));
    }
    Ok(pop)
}

/// Analyzes one sample of unit indices drawn from a superpopulation.
pub(crate) fn analyze_sample(
    pop: &Superpopulation,
    units: &[usize],
    alpha: f64,
    sigma_sq: [f64; 2],
    true_ace: f64,
) -> Result<ReplicationOutcome> {
    let n = units.len();
    let p = pop.cells;
    let mut values = vec![0.0; n * p];
    for (row, &i) in values.chunks_mut(p).zip(units) {
        pop.fill_regressors(i, row);
    }
    let x = DesignMatrix {
        rows: n,
        cols: p,
        values,
    };
    let a: Vec<f64> = units.iter().map(|&i| pop.treated[i] as u8 as f64).collect();
    let y: Vec<f64> = units.iter().map(|&i| pop.y(i)).collect();
    let system = StackedSystem::new(x, a, y)?;
    let analysis = analyze_system(&system, WeightTreatment::Estimated)?;
    let test = wald_test(&analysis.fit, alpha)?;

    let n_treated = units.iter().filter(|&&i| pop.treated[i]).count() as f64;
    let mut er = [0.0; 2];
    for arm in Arm::BOTH {
        let sample: Vec<RemainderUnit> = units
            .iter()
            .zip(&analysis.p_hat)
            .map(|(&i, &ph)| RemainderUnit {
                arm_weight: 1.0 / arm.probability(ph),
                outcome: Some(pop.potential(arm, i)),
            })
            .collect();
        let share = match arm {
            Arm::Treated => n_treated / n as f64,
            Arm::Control => 1.0 - n_treated / n as f64,
        };
        er[arm.index()] = remainder_estimate_from_sample(&sample, share, sigma_sq[arm.index()])?;
    }
    let var = analysis.fit.var_ace();
    let half_width = normal::quantile(1.0 - alpha / 2.0)? * var.sqrt();
    Ok(ReplicationOutcome {
        reject: test.reject,
        er0: er[0],
        er1: er[1],
        ace: analysis.fit.beta1,
        var_ace: var,
        covered: (analysis.fit.beta1 - true_ace).abs() <= half_width,
    })
}

/// Empirical power of the stacked-sandwich Wald test for samples of size
/// `config.n` drawn without replacement from one superpopulation.
pub fn run_generative_power(
    spec: &ScenarioSpec,
    config: &SimulationConfig,
) -> Result<SimulationReport> {
    config.check()?;
    if config.n > config.superpopulation_size {
        return Err(Error::InvalidInputs(format!(
            "sample size {} exceeds superpopulation size {}",
            config.n, config.superpopulation_size
        )));
    }
    let pop = generate_superpopulation(spec, config.superpopulation_size, config.seed)?;
    let sigma_sq = [
        spec.marginal_variance(Arm::Control),
        spec.marginal_variance(Arm::Treated),
    ];
    let true_ace = pop.ace();
    let results = run_replications(config, |rep| {
        let mut rng = seed_stream(config.seed, rep);
        let units = rand::seq::index::sample(&mut rng, pop.len(), config.n).into_vec();
        analyze_sample(&pop, &units, config.alpha, sigma_sq, true_ace)
    })?;
    aggregate(&spec.name, config, true_ace, results)
}
