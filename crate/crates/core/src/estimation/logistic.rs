//! Maximum-likelihood logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::terms::{DesignMatrix, DesignSpec, ModelTerms};
use crate::error::{Error, Result};
use crate::model::{Arm, PilotDataset, Validate, WeightEntry, WeightSet};

pub const MAX_ITERATIONS: usize = 100;
pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const STEP_TOLERANCE: f64 = 1e-10;
/// Coefficients beyond this magnitude are taken as evidence of separation.
pub const SEPARATION_COEFFICIENT: f64 = 30.0;
/// Fitted probabilities must stay inside (bound, 1 - bound) during fitting.
pub const SEPARATION_PROBABILITY: f64 = 1e-10;
/// Weights are only formed from probabilities inside (eps, 1 - eps).
pub const POSITIVITY_EPS: f64 = 1e-12;

pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Fitted propensity score model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityFit {
    pub gamma: Vec<f64>,
    pub design_spec: DesignSpec,
    pub converged: bool,
    pub iterations: usize,
}

impl PropensityFit {
    /// P(A = 1 | L) for each row.
    pub fn predict(&self, data: &PilotDataset) -> Result<Vec<f64>> {
        let x = self.design_spec.matrix(data)?;
        Ok(predict_rows(&x, &self.gamma))
    }
}

pub(crate) fn predict_rows(x: &DesignMatrix, gamma: &[f64]) -> Vec<f64> {
    x.iter_rows().map(|r| expit(dot(r, gamma))).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Symmetric matrix `sum_i c_i x_i x_i'`.
pub(crate) fn weighted_gram(x: &DesignMatrix, c: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let p = x.cols;
    let mut g = DMatrix::zeros(p, p);
    for (i, r) in x.iter_rows().enumerate() {
        let ci = c(i);
        if ci == 0.0 {
            continue;
        }
        for j in 0..p {
            let v = ci * r[j];
            for k in j..p {
                g[(j, k)] += v * r[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            g[(j, k)] = g[(k, j)];
        }
    }
    g
}

/// Solves `h x = b` for symmetric positive definite `h` after Jacobi scaling.
pub(crate) fn solve_spd(h: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let p = h.nrows();
    let d: Vec<f64> = (0..p)
        .map(|j| {
            let v = h[(j, j)];
            if v > 0.0 {
                1.0 / v.sqrt()
            } else {
                f64::NAN
            }
        })
        .collect();
    if d.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let scaled = DMatrix::from_fn(p, p, |i, j| h[(i, j)] * d[i] * d[j]);
    let rhs = DVector::from_fn(p, |i, _| b[i] * d[i]);
    let chol = scaled.cholesky()?;
    let y = chol.solve(&rhs);
    Some(DVector::from_fn(p, |i, _| y[i] * d[i]))
}

/// True when the columns of `x` are linearly dependent to working precision.
pub(crate) fn is_rank_deficient(x: &DesignMatrix) -> bool {
    if x.rows < x.cols {
        return true;
    }
    let g = weighted_gram(x, |_| 1.0);
    let p = g.nrows();
    if (0..p).any(|j| g[(j, j)] <= 0.0) {
        return true;
    }
    let scaled = DMatrix::from_fn(p, p, |i, j| g[(i, j)] / (g[(i, i)] * g[(j, j)]).sqrt());
    let eig = scaled.symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    min.is_nan() || min <= 1e-12 * max
}

/// Fits logistic regression of `a` (0/1) on the columns of `x`.
///
/// Returns the coefficients and the number of Newton steps taken.
pub fn fit_logistic(x: &DesignMatrix, a: &[f64]) -> Result<(Vec<f64>, usize)> {
    if is_rank_deficient(x) {
        return Err(Error::RankDeficiency { columns: x.cols });
    }
    let p = x.cols;
    let mut gamma = vec![0.0; p];
    for iter in 0..=MAX_ITERATIONS {
        let probs = predict_rows(x, &gamma);
        if let Some(i) = probs
            .iter()
            .position(|&q| !(q > SEPARATION_PROBABILITY && q < 1.0 - SEPARATION_PROBABILITY))
        {
            return Err(Error::Separation(format!(
                "fitted probability {} at row {i} after {iter} iterations",
                probs[i]
            )));
        }
        let mut score = DVector::zeros(p);
        for (r, (&ai, &pi)) in x.iter_rows().zip(a.iter().zip(&probs)) {
            let resid = ai - pi;
            for j in 0..p {
                score[j] += resid * r[j];
            }
        }
        if score.amax() < SCORE_TOLERANCE {
            return Ok((gamma, iter));
        }
        if iter == MAX_ITERATIONS {
            break;
        }
        let info = weighted_gram(x, |i| probs[i] * (1.0 - probs[i]));
        let step = solve_spd(&info, &score).ok_or(Error::RankDeficiency { columns: p })?;
        let mut rel = 0.0f64;
        for j in 0..p {
            gamma[j] += step[j];
            rel = rel.max(step[j].abs() / gamma[j].abs().max(1.0));
        }
        if let Some(j) = gamma.iter().position(|g| g.abs() > SEPARATION_COEFFICIENT) {
            return Err(Error::Separation(format!(
                "coefficient {j} reached {} after {} iterations",
                gamma[j],
                iter + 1
            )));
        }
        if rel < STEP_TOLERANCE {
            return Ok((gamma, iter + 1));
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
    })
}

/// Propensity score model P(A=1 | L) = expit(l' gamma) fitted by maximum likelihood.
pub fn fit_propensity(data: &PilotDataset, terms: &ModelTerms) -> Result<PropensityFit> {
    for arm in Arm::BOTH {
        if data.arm_count(arm) < 2 {
            if data.arm_count(arm) == 0 {
                return Err(Error::EmptyArm(arm));
            }
            return Err(Error::InvalidInputs(format!(
                "propensity model needs at least two rows with A = {}",
                arm.index()
            )));
        }
    }
    if let Some(v) = data.violations().into_iter().next() {
        return Err(Error::Invalid(crate::error::Violations(vec![v])));
    }
    let spec = DesignSpec::resolve(terms, data)?;
    let x = spec.matrix(data)?;
    let a: Vec<f64> = data.rows.iter().map(|r| r.a.indicator()).collect();
    let (gamma, iterations) = fit_logistic(&x, &a)?;
    Ok(PropensityFit {
        gamma,
        design_spec: spec,
        converged: true,
        iterations,
    })
}

/// Inverse probability of treatment weights from fitted propensities.
pub fn weights_from_probabilities(
    arms: impl Iterator<Item = Arm>,
    probs: &[f64],
) -> Result<WeightSet> {
    let mut entries = Vec::with_capacity(probs.len());
    for (i, (a, &p)) in arms.zip(probs).enumerate() {
        if !(p > POSITIVITY_EPS && p < 1.0 - POSITIVITY_EPS) {
            return Err(Error::Positivity { index: i, value: p });
        }
        entries.push(WeightEntry {
            a,
            w: 1.0 / a.probability(p),
        });
    }
    Ok(WeightSet { entries })
}

/// `W_i = 1/p_i` for treated rows and `1/(1 - p_i)` for controls.
pub fn iptw_weights(fit: &PropensityFit, data: &PilotDataset) -> Result<WeightSet> {
    if !fit.converged {
        return Err(Error::NonConvergence {
            iterations: fit.iterations,
        });
    }
    let probs = fit.predict(data)?;
    weights_from_probabilities(data.rows.iter().map(|r| r.a), &probs)
}
