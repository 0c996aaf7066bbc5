//! Illustrative weight distributions with a chosen design effect.
//!
//! Weights are reciprocals of `Beta(alpha, alpha)` draws, which have mean
//! 0.5, so every weight exceeds one and the population design effect is
//! `2 (alpha - 1)^2 / ((alpha - 2)(2 alpha - 1))` for `alpha > 2`.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::deff::kish_deff;
use crate::error::{Error, Result};
use crate::model::{Arm, WeightEntry, WeightSet};
use crate::simulation::seed_stream;

/// Smallest target accepted is `1 + MIN_EXCESS`.
pub const MIN_EXCESS: f64 = 1e-6;
pub const MAX_TARGET: f64 = 1000.0;
pub const SOLVER_TOLERANCE: f64 = 1e-10;
pub const HISTOGRAM_BINS: usize = 50;

/// Population design effect of `1 / X`, `X ~ Beta(alpha, alpha)`.
pub fn population_deff(alpha: f64) -> f64 {
    deff_at_offset(alpha - 2.0)
}

// Same function in t = alpha - 2, which keeps precision when alpha is near 2.
fn deff_at_offset(t: f64) -> f64 {
    2.0 * (t + 1.0) * (t + 1.0) / (t * (2.0 * t + 3.0))
}

fn check_target(target: f64) -> Result<()> {
    if (1.0 + MIN_EXCESS..=MAX_TARGET).contains(&target) {
        Ok(())
    } else {
        Err(Error::UnachievableTarget(target))
    }
}

/// Beta shape whose reciprocal draws have population design effect `target`.
pub fn beta_shape_for_deff(target: f64) -> Result<f64> {
    check_target(target)?;
    let mut lo = 1e-9;
    let mut hi = 1.0;
    while deff_at_offset(hi) > target {
        hi *= 2.0;
    }
    let mut best = (f64::INFINITY, hi);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let d = deff_at_offset(mid);
        if (d - target).abs() < best.0 {
            best = ((d - target).abs(), mid);
        }
        if (d - target).abs() < SOLVER_TOLERANCE || mid == lo || mid == hi {
            break;
        }
        if d > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(2.0 + best.1)
}

/// Drawn weights with their target and realized design effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSample {
    pub target_deff: f64,
    pub alpha: f64,
    pub population_deff: f64,
    pub realized_deff: f64,
    pub attempts: usize,
    pub seed: u64,
    pub weights: WeightSet,
}

impl WeightSample {
    pub fn values(&self) -> Vec<f64> {
        self.weights.values().collect()
    }
}

/// Optional acceptance rule for the realized design effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    pub tolerance: f64,
    pub max_attempts: usize,
}

fn draw<R: Rng>(beta: &Beta<f64>, n: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = beta.sample(rng);
        if x > 0.0 && x < 1.0 {
            out.push(1.0 / x);
        }
    }
    out
}

/// Draws `n` reciprocal-beta weights. With `acceptance`, redraws until the
/// realized Kish design effect is within the tolerance of the target.
pub fn sample_weight_distribution(
    target: f64,
    n: usize,
    seed: u64,
    acceptance: Option<Acceptance>,
) -> Result<WeightSample> {
    let alpha = beta_shape_for_deff(target)?;
    if n < 2 {
        return Err(Error::InvalidInputs(format!(
            "need at least 2 weights, got {n}"
        )));
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::InvalidInputs(e.to_string()))?;
    let mut rng = seed_stream(seed, 0);
    let max_attempts = acceptance.map_or(1, |a| a.max_attempts.max(1));
    let mut realized = f64::NAN;
    for attempt in 1..=max_attempts {
        let w = draw(&beta, n, &mut rng);
        realized = kish_deff(w.iter().copied()).expect("n >= 2");
        if acceptance.is_none_or(|a| (realized - target).abs() <= a.tolerance) {
            return Ok(WeightSample {
                target_deff: target,
                alpha,
                population_deff: population_deff(alpha),
                realized_deff: realized,
                attempts: attempt,
                seed,
                weights: WeightSet {
                    entries: w
                        .into_iter()
                        .map(|w| WeightEntry { a: Arm::Treated, w })
                        .collect(),
                },
            });
        }
    }
    Err(Error::ResampleBudgetExceeded {
        attempts: max_attempts,
        last: realized,
    })
}

/// Equal-width bins over `[min, p99]` plus one overflow bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lefts: Vec<f64>,
    pub counts: Vec<u64>,
    pub width: f64,
    /// Left edge of the overflow bin (the 99th percentile).
    pub overflow_left: f64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInputs("histogram needs finite values".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let min = sorted[0];
        let rank = ((0.99 * sorted.len() as f64).ceil() as usize).max(1);
        let p99 = sorted[rank - 1];
        let width = (p99 - min) / HISTOGRAM_BINS as f64;
        let mut counts = vec![0u64; HISTOGRAM_BINS];
        let mut overflow = 0;
        for &v in values {
            if v > p99 {
                overflow += 1;
            } else if width > 0.0 {
                let b = (((v - min) / width) as usize).min(HISTOGRAM_BINS - 1);
                counts[b] += 1;
            } else {
                counts[0] += 1;
            }
        }
        let lefts = (0..HISTOGRAM_BINS)
            .map(|i| min + i as f64 * width)
            .collect();
        Ok(Histogram {
            lefts,
            counts,
            width,
            overflow_left: p99,
            overflow,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow
    }

    /// `bin_left,count` lines with a header; the last line is the overflow bin.
    pub fn to_delimited(&self) -> String {
        let mut s = String::from("bin_left,count\n");
        for (l, c) in self.lefts.iter().zip(&self.counts) {
            s.push_str(&format!("{l},{c}\n"));
        }
        s.push_str(&format!("{},{}\n", self.overflow_left, self.overflow));
        s
    }
}
