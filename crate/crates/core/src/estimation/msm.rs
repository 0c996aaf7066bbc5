//! Hajek means, the weighted least squares MSM, and its stacked
//! estimating-equation sandwich variance.
//!
//! The stacked parameter is `theta = (gamma, mu1, mu0)` with
//!
//! ```text
//! psi_gamma = {A - expit(l' gamma)} l
//! psi_mu1   = W A (Y - mu1)
//! psi_mu0   = W (1 - A) (Y - mu0)
//! ```
//!
//! and `W = A / p + (1 - A) / (1 - p)`, `p = expit(l' gamma)`. The MSM
//! parameters are `beta0 = mu0`, `beta1 = mu1 - mu0`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::logistic::{dot, expit, fit_logistic, predict_rows, weights_from_probabilities};
use super::terms::{DesignMatrix, DesignSpec, ModelTerms};
use crate::error::{Error, Result};
use crate::model::{Arm, MsmFit, PilotDataset, WeightSet, WeightTreatment};
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HajekMeans {
    pub mu0hat: f64,
    pub mu1hat: f64,
    pub ace_hat: f64,
}

fn outcomes(data: &PilotDataset) -> Result<Vec<f64>> {
    data.rows
        .iter()
        .enumerate()
        .map(|(i, r)| r.y.ok_or(Error::MissingOutcome(i)))
        .collect()
}

fn check_alignment(data: &PilotDataset, weights: &WeightSet) -> Result<()> {
    if data.len() != weights.len() {
        return Err(Error::Alignment {
            what: "weight set",
            expected: data.len(),
            found: weights.len(),
        });
    }
    Ok(())
}

pub(crate) fn hajek_from_parts(a: &[f64], y: &[f64], w: &[f64]) -> Result<HajekMeans> {
    let (mut s0, mut s1, mut sy0, mut sy1) = (0.0, 0.0, 0.0, 0.0);
    for ((&ai, &yi), &wi) in a.iter().zip(y).zip(w) {
        if ai == 1.0 {
            s1 += wi;
            sy1 += wi * yi;
        } else {
            s0 += wi;
            sy0 += wi * yi;
        }
    }
    if s1 == 0.0 {
        return Err(Error::EmptyArm(Arm::Treated));
    }
    if s0 == 0.0 {
        return Err(Error::EmptyArm(Arm::Control));
    }
    let mu1hat = sy1 / s1;
    let mu0hat = sy0 / s0;
    Ok(HajekMeans {
        mu0hat,
        mu1hat,
        ace_hat: mu1hat - mu0hat,
    })
}

/// Per-arm weighted means `sum W Y I(A=a) / sum W I(A=a)` and their difference.
pub fn hajek_means(data: &PilotDataset, weights: &WeightSet) -> Result<HajekMeans> {
    check_alignment(data, weights)?;
    let y = outcomes(data)?;
    let a: Vec<f64> = data.rows.iter().map(|r| r.a.indicator()).collect();
    let w: Vec<f64> = weights.values().collect();
    hajek_from_parts(&a, &y, &w)
}

/// Weighted least squares fit of `Y ~ 1 + A`, returning `(beta0, beta1)`.
pub fn wls_msm(data: &PilotDataset, weights: &WeightSet) -> Result<(f64, f64)> {
    check_alignment(data, weights)?;
    let y = outcomes(data)?;
    let mut xtwx = DMatrix::<f64>::zeros(2, 2);
    let mut xtwy = DVector::<f64>::zeros(2);
    for ((r, &yi), w) in data.rows.iter().zip(&y).zip(weights.values()) {
        let x = [1.0, r.a.indicator()];
        for j in 0..2 {
            xtwy[j] += w * x[j] * yi;
            for k in 0..2 {
                xtwx[(j, k)] += w * x[j] * x[k];
            }
        }
    }
    let beta = xtwx.lu().solve(&xtwy).ok_or(Error::InvalidInputs(
        "both arms need positive total weight".into(),
    ))?;
    Ok((beta[0], beta[1]))
}

/// Potential-outcome moments estimated from a weighted dataset:
/// `E(Y_a)` and `Var(Y_a) = E(Y_a^2) - E(Y_a)^2`, each by Hajek weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutcomeMoments {
    pub mean0: f64,
    pub mean1: f64,
    pub var0: f64,
    pub var1: f64,
}

pub fn potential_outcome_moments(
    data: &PilotDataset,
    weights: &WeightSet,
) -> Result<OutcomeMoments> {
    check_alignment(data, weights)?;
    let y = outcomes(data)?;
    let a: Vec<f64> = data.rows.iter().map(|r| r.a.indicator()).collect();
    let w: Vec<f64> = weights.values().collect();
    let first = hajek_from_parts(&a, &y, &w)?;
    let y2: Vec<f64> = y.iter().map(|v| v * v).collect();
    let second = hajek_from_parts(&a, &y2, &w)?;
    Ok(OutcomeMoments {
        mean0: first.mu0hat,
        mean1: first.mu1hat,
        var0: second.mu0hat - first.mu0hat * first.mu0hat,
        var1: second.mu1hat - first.mu1hat * first.mu1hat,
    })
}

/// The stacked estimating equations for one dataset.
#[derive(Debug, Clone)]
pub struct StackedSystem {
    x: DesignMatrix,
    a: Vec<f64>,
    y: Vec<f64>,
}

impl StackedSystem {
    pub fn new(x: DesignMatrix, a: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if a.len() != x.rows || y.len() != x.rows {
            return Err(Error::Alignment {
                what: "treatment/outcome vectors",
                expected: x.rows,
                found: a.len().min(y.len()),
            });
        }
        Ok(StackedSystem { x, a, y })
    }

    pub fn from_data(data: &PilotDataset, spec: &DesignSpec) -> Result<Self> {
        let x = spec.matrix(data)?;
        let y = outcomes(data)?;
        let a = data.rows.iter().map(|r| r.a.indicator()).collect();
        Self::new(x, a, y)
    }

    pub fn n(&self) -> usize {
        self.x.rows
    }

    /// Number of propensity coefficients.
    pub fn p(&self) -> usize {
        self.x.cols
    }

    pub fn dim(&self) -> usize {
        self.p() + 2
    }

    /// psi(theta) for observation i.
    pub fn psi_row(&self, theta: &[f64], i: usize, out: &mut [f64]) {
        let p = self.p();
        let l = self.x.row(i);
        let prob = expit(dot(l, &theta[..p]));
        let (a, y) = (self.a[i], self.y[i]);
        for j in 0..p {
            out[j] = (a - prob) * l[j];
        }
        out[p] = a / prob * (y - theta[p]);
        out[p + 1] = (1.0 - a) / (1.0 - prob) * (y - theta[p + 1]);
    }

    /// Empirical mean of psi.
    pub fn mean_psi(&self, theta: &[f64]) -> DVector<f64> {
        let d = self.dim();
        let mut acc = DVector::zeros(d);
        let mut buf = vec![0.0; d];
        for i in 0..self.n() {
            self.psi_row(theta, i, &mut buf);
            for j in 0..d {
                acc[j] += buf[j];
            }
        }
        acc / self.n() as f64
    }

    /// Analytic bread: empirical mean of -d psi / d theta'.
    pub fn bread(&self, theta: &[f64]) -> DMatrix<f64> {
        let p = self.p();
        let d = self.dim();
        let (mu1, mu0) = (theta[p], theta[p + 1]);
        let mut m = DMatrix::zeros(d, d);
        for i in 0..self.n() {
            let l = self.x.row(i);
            let prob = expit(dot(l, &theta[..p]));
            let (a, y) = (self.a[i], self.y[i]);
            let v = prob * (1.0 - prob);
            for j in 0..p {
                for k in 0..p {
                    m[(j, k)] += v * l[j] * l[k];
                }
            }
            // d/dgamma of a (y - mu1) / p is -a (y - mu1) (1 - p) / p * l
            let c1 = a * (y - mu1) * (1.0 - prob) / prob;
            // d/dgamma of (1 - a)(y - mu0) / (1 - p) is (1 - a)(y - mu0) p / (1 - p) * l
            let c0 = -(1.0 - a) * (y - mu0) * prob / (1.0 - prob);
            for k in 0..p {
                m[(p, k)] += c1 * l[k];
                m[(p + 1, k)] += c0 * l[k];
            }
            m[(p, p)] += a / prob;
            m[(p + 1, p + 1)] += (1.0 - a) / (1.0 - prob);
        }
        m / self.n() as f64
    }

    /// Central finite-difference bread with step `eps^(1/3) max(1 / s_j, |theta_j|)`,
    /// where `s_j` is the largest absolute value of regressor j (1 for the means).
    pub fn bread_numeric(&self, theta: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let p = self.p();
        let base_step = f64::EPSILON.cbrt();
        let mut scale = vec![1.0f64; d];
        for i in 0..self.n() {
            for (s, v) in scale[..p].iter_mut().zip(self.x.row(i)) {
                *s = s.max(v.abs());
            }
        }
        let mut m = DMatrix::zeros(d, d);
        let mut t = theta.to_vec();
        for k in 0..d {
            let h = base_step * theta[k].abs().max(1.0 / scale[k]);
            t[k] = theta[k] + h;
            let up = self.mean_psi(&t);
            t[k] = theta[k] - h;
            let down = self.mean_psi(&t);
            t[k] = theta[k];
            for j in 0..d {
                m[(j, k)] = -(up[j] - down[j]) / (2.0 * h);
            }
        }
        m
    }

    /// Meat: empirical mean of psi psi'.
    pub fn meat(&self, theta: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        let mut buf = vec![0.0; d];
        for i in 0..self.n() {
            self.psi_row(theta, i, &mut buf);
            for j in 0..d {
                for k in j..d {
                    m[(j, k)] += buf[j] * buf[k];
                }
            }
        }
        for j in 0..d {
            for k in 0..j {
                m[(j, k)] = m[(k, j)];
            }
        }
        m / self.n() as f64
    }

    /// Root of the estimating equations: logistic MLE, then Hajek means.
    pub fn solve(&self) -> Result<Vec<f64>> {
        let (gamma, _) = fit_logistic(&self.x, &self.a)?;
        let probs = predict_rows(&self.x, &gamma);
        let w = self.weights(&probs)?;
        let h = hajek_from_parts(&self.a, &self.y, &w)?;
        let mut theta = gamma;
        theta.push(h.mu1hat);
        theta.push(h.mu0hat);
        Ok(theta)
    }

    fn weights(&self, probs: &[f64]) -> Result<Vec<f64>> {
        let arms = self.a.iter().map(|&a| Arm::from_bool(a == 1.0));
        Ok(weights_from_probabilities(arms, probs)?.values().collect())
    }

    /// Sandwich covariance of (mu1, mu0), `n^-1 A^-1 B A^-T`.
    ///
    /// With `Known` weights only the mean equations are used, so the
    /// propensity model is treated as fixed.
    pub fn mean_covariance(
        &self,
        theta: &[f64],
        treatment: WeightTreatment,
    ) -> Result<[[f64; 2]; 2]> {
        let p = self.p();
        let n = self.n() as f64;
        let bread = self.bread(theta);
        let meat = self.meat(theta);
        let full = match treatment {
            WeightTreatment::Estimated => {
                let inv = bread
                    .clone()
                    .lu()
                    .try_inverse()
                    .ok_or(Error::SingularBread)?;
                if inv.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SingularBread);
                }
                &inv * &meat * inv.transpose() / n
            }
            WeightTreatment::Known => {
                let a = bread.view((p, p), (2, 2)).into_owned();
                let b = meat.view((p, p), (2, 2)).into_owned();
                if a[(0, 0)] <= 0.0 || a[(1, 1)] <= 0.0 {
                    return Err(Error::SingularBread);
                }
                let inv = DMatrix::from_diagonal(&DVector::from_vec(vec![
                    1.0 / a[(0, 0)],
                    1.0 / a[(1, 1)],
                ]));
                let cov = &inv * &b * &inv / n;
                let mut padded = DMatrix::zeros(p + 2, p + 2);
                padded.view_mut((p, p), (2, 2)).copy_from(&cov);
                padded
            }
        };
        Ok([
            [full[(p, p)], full[(p, p + 1)]],
            [full[(p + 1, p)], full[(p + 1, p + 1)]],
        ])
    }
}

/// Everything the analysis pipeline produces for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MsmAnalysis {
    pub fit: MsmFit,
    pub gamma: Vec<f64>,
    /// Fitted P(A = 1 | L) per row.
    pub p_hat: Vec<f64>,
    pub hajek: HajekMeans,
    /// Var(ACE-hat) with the propensity model treated as estimated.
    pub var_ace_estimated: f64,
    /// Var(ACE-hat) with weights treated as known.
    pub var_ace_known: f64,
}

fn msm_fit_from(
    theta: &[f64],
    p: usize,
    cov_mu: [[f64; 2]; 2],
    treatment: WeightTreatment,
) -> MsmFit {
    let (mu1, mu0) = (theta[p], theta[p + 1]);
    // beta = M (mu1, mu0) with M = [[0, 1], [1, -1]]
    let (s11, s10, s00) = (cov_mu[0][0], cov_mu[0][1], cov_mu[1][1]);
    let var_b0 = s00;
    let cov_b01 = s10 - s00;
    let var_b1 = s11 - 2.0 * s10 + s00;
    let beta1 = mu1 - mu0;
    let wald_z = beta1 / var_b1.sqrt();
    MsmFit {
        beta0: mu0,
        beta1,
        cov: [[var_b0, cov_b01], [cov_b01, var_b1]],
        wald_z,
        p_value: normal::two_sided_p_value(wald_z),
        weights_treated_as: treatment,
    }
}

/// Runs propensity fit, weighting, Hajek estimation and both sandwich variances
/// on an assembled design matrix.
pub fn analyze_system(system: &StackedSystem, report_as: WeightTreatment) -> Result<MsmAnalysis> {
    let theta = system.solve()?;
    let p = system.p();
    let est = system.mean_covariance(&theta, WeightTreatment::Estimated)?;
    let known = system.mean_covariance(&theta, WeightTreatment::Known)?;
    let var = |c: [[f64; 2]; 2]| c[0][0] - 2.0 * c[0][1] + c[1][1];
    let chosen = match report_as {
        WeightTreatment::Estimated => est,
        WeightTreatment::Known => known,
    };
    let fit = msm_fit_from(&theta, p, chosen, report_as);
    let gamma = theta[..p].to_vec();
    Ok(MsmAnalysis {
        fit,
        p_hat: predict_rows(&system.x, &gamma),
        gamma,
        hajek: HajekMeans {
            mu0hat: theta[p + 1],
            mu1hat: theta[p],
            ace_hat: theta[p] - theta[p + 1],
        },
        var_ace_estimated: var(est),
        var_ace_known: var(known),
    })
}

/// Full analysis of a dataset with outcomes under the given propensity terms.
pub fn analyze(
    data: &PilotDataset,
    terms: &ModelTerms,
    report_as: WeightTreatment,
) -> Result<MsmAnalysis> {
    for arm in Arm::BOTH {
        if data.arm_count(arm) == 0 {
            return Err(Error::EmptyArm(arm));
        }
    }
    let spec = DesignSpec::resolve(terms, data)?;
    let system = StackedSystem::from_data(data, &spec)?;
    analyze_system(&system, report_as)
}

/// Fits E(Y_a) = beta0 + beta1 a by IPTW with a stacked sandwich covariance.
pub fn fit_msm_sandwich(
    data: &PilotDataset,
    terms: &ModelTerms,
    weight_treatment: WeightTreatment,
) -> Result<MsmFit> {
    Ok(analyze(data, terms, weight_treatment)?.fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaldOutcome {
    pub reject: bool,
    pub p_value: f64,
    pub z: f64,
}

/// Two-sided Wald test of beta1 = 0; rejects iff |z| > z_{1 - alpha/2}.
pub fn wald_test(fit: &MsmFit, alpha: f64) -> Result<WaldOutcome> {
    let var = fit.cov[1][1];
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::DegenerateVariance(var));
    }
    let z = fit.beta1 / var.sqrt();
    let crit = normal::quantile(1.0 - alpha / 2.0)?;
    Ok(WaldOutcome {
        reject: z.abs() > crit,
        p_value: normal::two_sided_p_value(z),
        z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PilotRow, WeightEntry};

    fn rows(spec: &[(u8, f64, f64)]) -> PilotDataset {
        PilotDataset {
            covariate_names: vec!["l".into()],
            rows: spec
                .iter()
                .map(|&(a, l, y)| PilotRow {
                    a: Arm::from_index(a).unwrap(),
                    x: vec![l],
                    y: Some(y),
                })
                .collect(),
        }
    }

    #[test]
    fn hajek_hand_example() {
        let d = rows(&[(1, 0.0, 1.0), (1, 0.0, 3.0), (0, 0.0, 0.0), (0, 0.0, 2.0)]);
        let w = WeightSet {
            entries: [(1, 2.0), (1, 2.0), (0, 1.0), (0, 3.0)]
                .iter()
                .map(|&(a, w)| WeightEntry {
                    a: Arm::from_index(a).unwrap(),
                    w,
                })
                .collect(),
        };
        let h = hajek_means(&d, &w).unwrap();
        assert_eq!((h.mu1hat, h.mu0hat, h.ace_hat), (2.0, 1.5, 0.5));
        let (b0, b1) = wls_msm(&d, &w).unwrap();
        assert!((b0 - 1.5).abs() < 1e-12 && (b1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hajek_needs_outcomes_and_arms() {
        let mut d = rows(&[(1, 0.0, 1.0), (0, 0.0, 0.0)]);
        let w = WeightSet {
            entries: vec![
                WeightEntry {
                    a: Arm::Treated,
                    w: 1.0,
                },
                WeightEntry {
                    a: Arm::Control,
                    w: 1.0,
                },
            ],
        };
        d.rows[1].y = None;
        assert!(matches!(hajek_means(&d, &w), Err(Error::MissingOutcome(1))));
        let d = rows(&[(1, 0.0, 1.0), (1, 0.0, 0.0)]);
        assert!(matches!(
            hajek_means(&d, &w),
            Err(Error::EmptyArm(Arm::Control))
        ));
    }

    #[test]
    fn wald_boundaries() {
        let fit = |beta1: f64, var: f64| MsmFit {
            beta0: 0.0,
            beta1,
            cov: [[1.0, 0.0], [0.0, var]],
            wald_z: beta1 / var.sqrt(),
            p_value: 0.0,
            weights_treated_as: WeightTreatment::Estimated,
        };
        let w = wald_test(&fit(0.0, 1.0), 0.05).unwrap();
        assert!(!w.reject);
        assert_eq!(w.p_value, 1.0);

        let crit = normal::quantile(0.975).unwrap();
        assert!(!wald_test(&fit(crit, 1.0), 0.05).unwrap().reject);
        assert!(wald_test(&fit(1.96, 1.0), 0.05).unwrap().reject);

        let w = wald_test(&fit(2.5, 1.0), 0.05).unwrap();
        assert!(w.reject);
        assert!((w.p_value - 0.0124193).abs() < 1e-6);

        assert!(matches!(
            wald_test(&fit(1.0, 0.0), 0.05),
            Err(Error::DegenerateVariance(_))
        ));
    }

    #[test]
    fn intercept_only_matches_two_sample_sandwich() {
        let d = rows(&[
            (1, 0.0, 1.0),
            (1, 0.0, 4.0),
            (1, 0.0, 2.5),
            (0, 0.0, 0.5),
            (0, 0.0, 3.0),
            (0, 0.0, -1.0),
            (0, 0.0, 2.0),
        ]);
        let fit = fit_msm_sandwich(
            &d,
            &ModelTerms::intercept_only(),
            WeightTreatment::Estimated,
        )
        .unwrap();
        let arm = |a: Arm| -> Vec<f64> {
            d.rows
                .iter()
                .filter(|r| r.a == a)
                .map(|r| r.y.unwrap())
                .collect()
        };
        let biased_var_of_mean = |v: &[f64]| {
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n / n
        };
        let expected =
            biased_var_of_mean(&arm(Arm::Treated)) + biased_var_of_mean(&arm(Arm::Control));
        assert!((fit.cov[1][1] - expected).abs() < 1e-10);
        let known =
            fit_msm_sandwich(&d, &ModelTerms::intercept_only(), WeightTreatment::Known).unwrap();
        assert!((known.cov[1][1] - expected).abs() < 1e-10);
        assert!((fit.beta1 - (7.5 / 3.0 - 4.5 / 4.0)).abs() < 1e-12);
    }
}
