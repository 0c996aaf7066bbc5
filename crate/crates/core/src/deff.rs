//! Design effects due to weighting.
//!
//! Three routes are provided: exact evaluation over an assumed discrete joint
//! law of (L, A), the Kish form applied to estimated pilot weights, and the
//! exact design effect including the outcome-dependent remainder `Er_a`.
//! All expectations over discrete laws are computed by exact summation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    Arm, CellOutcome, DeffMethod, DesignEffectPair, JointDistribution, PilotDataset, ScenarioSpec,
    Validate, WeightSet,
};

fn checked(joint: &JointDistribution) -> Result<()> {
    let v = joint.violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(crate::error::Violations(v)))
    }
}

/// Cell masses renormalized to sum to exactly one.
fn cell_masses(joint: &JointDistribution) -> Vec<f64> {
    let total = joint.total_mass();
    joint.cells.iter().map(|c| c.p_l / total).collect()
}

/// P(A=a) E{W^2 I(A=a)} / [E{W I(A=a)}]^2 evaluated exactly over the cells.
///
/// With true weights `E{W I(A=a)} = 1`, so the ratio equals
/// `m * sum_l r_l / pi_l` with `pi_l = P(A=a|L=l)` and `m = sum_l r_l pi_l`.
/// It is evaluated as `1 + sum_l r_l (pi_l - m)^2 / (pi_l m)`, which is the
/// same quantity written so that it can never round below one.
pub fn closed_form_deff(joint: &JointDistribution, arm: Arm) -> Result<f64> {
    checked(joint)?;
    let r = cell_masses(joint);
    let pi: Vec<f64> = joint
        .cells
        .iter()
        .map(|c| arm.probability(c.p_a1_given_l))
        .collect();
    let m: f64 = r.iter().zip(&pi).map(|(r, p)| r * p).sum();
    let excess: f64 = r
        .iter()
        .zip(&pi)
        .map(|(r, p)| r * (p - m) * (p - m) / (p * m))
        .sum();
    Ok(1.0 + excess)
}

/// Closed-form design effects for both arms.
pub fn closed_form_pair(joint: &JointDistribution) -> Result<DesignEffectPair> {
    Ok(DesignEffectPair {
        deff0: closed_form_deff(joint, Arm::Control)?,
        deff1: closed_form_deff(joint, Arm::Treated)?,
        method: DeffMethod::ClosedForm,
        remainder0: None,
        remainder1: None,
    })
}

/// Kish's design effect `n sum w^2 / (sum w)^2` for a single set of weights.
///
/// Computed in the equivalent form `1 + S^2(w) / mean(w)^2` with a centered
/// second pass, so the result is never below one. Returns `None` for an
/// empty input.
pub fn kish_deff<I>(weights: I) -> Option<f64>
where
    I: IntoIterator<Item = f64>,
    I::IntoIter: Clone,
{
    let it = weights.into_iter();
    let (n, sum) = it.clone().fold((0usize, 0.0), |(n, s), w| (n + 1, s + w));
    if n == 0 {
        return None;
    }
    let mean = sum / n as f64;
    let ss: f64 = it.map(|w| (w - mean) * (w - mean)).sum();
    Some(1.0 + ss / n as f64 / (mean * mean))
}

/// Kish design effect of the estimated weights in one arm of a pilot dataset.
///
/// `weights` must be aligned row-for-row with `data`. Weights are used as
/// given; the estimator is invariant to their scale.
pub fn kish_deff_from_pilot(data: &PilotDataset, weights: &WeightSet, arm: Arm) -> Result<f64> {
    if weights.len() != data.len() {
        return Err(Error::Alignment {
            what: "weight set",
            expected: data.len(),
            found: weights.len(),
        });
    }
    if let Some(i) = data
        .rows
        .iter()
        .zip(&weights.entries)
        .position(|(r, e)| r.a != e.a)
    {
        return Err(Error::InvalidInputs(format!(
            "weight {i} belongs to arm {} but row {i} has A = {}",
            weights.entries[i].a.index(),
            data.rows[i].a.index()
        )));
    }
    if let Some(i) = weights.values().position(|w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidInputs(format!(
            "weight {i} is not positive and finite"
        )));
    }
    kish_deff(weights.arm_weights(arm)).ok_or(Error::EmptyArm(arm))
}

/// Pilot-data design effects for both arms.
pub fn pilot_pair(data: &PilotDataset, weights: &WeightSet) -> Result<DesignEffectPair> {
    Ok(DesignEffectPair {
        deff0: kish_deff_from_pilot(data, weights, Arm::Control)?,
        deff1: kish_deff_from_pilot(data, weights, Arm::Treated)?,
        method: DeffMethod::PilotKish,
        remainder0: None,
        remainder1: None,
    })
}

/// Exact population moments needed for the remainder term of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArmMoments {
    /// P(A = a).
    pub p_arm: f64,
    /// E(W_a) with W_a = 1 / P(A=a | L).
    pub mean_w: f64,
    pub var_w: f64,
    /// mu_a = E(Y_a).
    pub mu: f64,
    /// sigma_a^2 = Var(Y_a).
    pub sigma_sq: f64,
    /// R = E[{W_a - E(W_a)} (Y_a - mu_a)^2].
    pub r: f64,
    /// Var(Y_a^2 - 2 mu_a Y_a), i.e. Var{(Y_a - mu_a)^2}.
    pub var_transform: f64,
}

impl ArmMoments {
    /// Er_a = {P(A=a) / sigma_a^2} R.
    pub fn remainder(&self) -> f64 {
        self.p_arm / self.sigma_sq * self.r
    }

    pub fn bound(&self) -> f64 {
        remainder_bound(self.var_w, self.var_transform, self.p_arm, self.sigma_sq)
    }
}

/// Exact moments of arm `arm` under a discrete joint law and per-cell outcome laws.
pub fn arm_moments(
    joint: &JointDistribution,
    outcomes: &[CellOutcome],
    arm: Arm,
) -> Result<ArmMoments> {
    checked(joint)?;
    if outcomes.len() != joint.len() {
        return Err(Error::Alignment {
            what: "outcome laws",
            expected: joint.len(),
            found: outcomes.len(),
        });
    }
    let r = cell_masses(joint);
    let w: Vec<f64> = joint
        .cells
        .iter()
        .map(|c| 1.0 / arm.probability(c.p_a1_given_l))
        .collect();
    let laws: Vec<_> = outcomes.iter().map(|o| *o.law(arm)).collect();

    let p_arm: f64 = joint
        .cells
        .iter()
        .zip(&r)
        .map(|(c, r)| r * arm.probability(c.p_a1_given_l))
        .sum();
    let mean_w: f64 = r.iter().zip(&w).map(|(r, w)| r * w).sum();
    let var_w: f64 = r
        .iter()
        .zip(&w)
        .map(|(r, w)| r * (w - mean_w).powi(2))
        .sum();
    let mu: f64 = r.iter().zip(&laws).map(|(r, y)| r * y.mean()).sum();

    // Per-cell E[(Y - mu)^2 | L] and E[(Y - mu)^4 | L].
    let mut sigma_sq = 0.0;
    let mut fourth = 0.0;
    let mut cov = 0.0;
    for ((r, w), law) in r.iter().zip(&w).zip(&laws) {
        let d = law.mean() - mu;
        let v = law.variance();
        let m2 = v + d * d;
        let m4 = law.fourth_central_moment()
            + 4.0 * d * law.third_central_moment()
            + 6.0 * d * d * v
            + d.powi(4);
        sigma_sq += r * m2;
        fourth += r * m4;
        cov += r * (w - mean_w) * m2;
    }
    let var_transform = (fourth - sigma_sq * sigma_sq).max(0.0);

    Ok(ArmMoments {
        p_arm,
        mean_w,
        var_w,
        mu,
        sigma_sq,
        r: cov,
        var_transform,
    })
}

/// Exact design effect for one arm including the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FullDeff {
    pub closed_form: f64,
    pub remainder: f64,
    /// `closed_form + remainder`.
    pub deff: f64,
}

/// Closed-form design effect plus `Er_a`, all expectations exact over cells.
pub fn full_deff_with_remainder(
    joint: &JointDistribution,
    outcomes: &[CellOutcome],
    arm: Arm,
) -> Result<FullDeff> {
    let closed_form = closed_form_deff(joint, arm)?;
    let remainder = arm_moments(joint, outcomes, arm)?.remainder();
    Ok(FullDeff {
        closed_form,
        remainder,
        deff: closed_form + remainder,
    })
}

/// Full design effects for both arms of a scenario.
pub fn full_pair(spec: &ScenarioSpec) -> Result<DesignEffectPair> {
    let d0 = full_deff_with_remainder(&spec.joint, &spec.outcomes, Arm::Control)?;
    let d1 = full_deff_with_remainder(&spec.joint, &spec.outcomes, Arm::Treated)?;
    Ok(DesignEffectPair {
        deff0: d0.deff,
        deff1: d1.deff,
        method: DeffMethod::FullWithRemainder,
        remainder0: Some(d0.remainder),
        remainder1: Some(d1.remainder),
    })
}

/// Cauchy-Schwarz bound on |Er_a|:
/// `{pA / sigma_a^2} sqrt(Var(W_a) Var(Y_a^2 - 2 mu_a Y_a))`.
pub fn remainder_bound(
    weight_variance: f64,
    outcome_transform_variance: f64,
    p_arm: f64,
    sigma_sq: f64,
) -> f64 {
    p_arm / sigma_sq * (weight_variance.max(0.0) * outcome_transform_variance.max(0.0)).sqrt()
}

/// One unit's contribution to the sample remainder estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderUnit {
    /// Estimated 1 / P(A=a | L) for this unit, whatever treatment it received.
    pub arm_weight: f64,
    /// Y_a for this unit: a realized potential outcome or a model prediction.
    pub outcome: Option<f64>,
}

/// Plug-in estimate of Er_a from a sample:
/// `{N_a / (n sigma_a^2)} mean[{W_a - mean(W_a)} {Y_a - mean(Y_a)}^2]`.
///
/// `arm_share` is `N_a / n`; `sigma_sq` is supplied by the caller.
pub fn remainder_estimate_from_sample(
    units: &[RemainderUnit],
    arm_share: f64,
    sigma_sq: f64,
) -> Result<f64> {
    if units.is_empty() {
        return Err(Error::InvalidInputs(
            "remainder estimate needs at least one unit".into(),
        ));
    }
    if sigma_sq.is_nan() || sigma_sq <= 0.0 {
        return Err(Error::InvalidInputs(format!(
            "sigma^2 must be positive, got {sigma_sq}"
        )));
    }
    let mut y = Vec::with_capacity(units.len());
    for (i, u) in units.iter().enumerate() {
        y.push(u.outcome.ok_or(Error::MissingOutcome(i))?);
    }
    let n = units.len() as f64;
    let mean_w = units.iter().map(|u| u.arm_weight).sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let cross: f64 = units
        .iter()
        .zip(&y)
        .map(|(u, y)| (u.arm_weight - mean_w) * (y - mean_y).powi(2))
        .sum::<f64>()
        / n;
    Ok(arm_share / sigma_sq * cross)
}

/// The unweighted-equivalent sample size `n / deff`.
pub fn effective_sample_size(n: u64, deff: f64) -> f64 {
    n as f64 / deff
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Cell, OutcomeLaw, PilotRow, WeightEntry};
    use crate::presets;

    /// Direct transcription of P(A=a) E{W^2 I(A=a)} / [E{W I(A=a)}]^2 by
    /// enumerating the (L, A) joint law.
    fn brute_force(joint: &JointDistribution, arm: Arm) -> f64 {
        let mut p_arm = 0.0;
        let mut e_w2 = 0.0;
        let mut e_w = 0.0;
        for c in &joint.cells {
            for a in Arm::BOTH {
                let p = c.p_l * a.probability(c.p_a1_given_l);
                let w = 1.0 / a.probability(c.p_a1_given_l);
                if a == arm {
                    p_arm += p;
                    e_w2 += p * w * w;
                    e_w += p * w;
                }
            }
        }
        p_arm * e_w2 / (e_w * e_w)
    }

    #[test]
    fn scenario1_closed_form() {
        let s = presets::scenario1();
        let d0 = closed_form_deff(&s.joint, Arm::Control).unwrap();
        let d1 = closed_form_deff(&s.joint, Arm::Treated).unwrap();
        assert!((d0 - 1.12).abs() < 1e-12);
        // E{W^2 I} = 1.6, E{W I} = 1, P(A=1) = 0.65
        assert!((d1 - 0.65 * 1.6).abs() < 1e-12);
        assert!((d0 - brute_force(&s.joint, Arm::Control)).abs() < 1e-12);
    }

    #[test]
    fn scenario2_closed_form_is_25_over_9() {
        let s = presets::scenario2();
        for arm in Arm::BOTH {
            let d = closed_form_deff(&s.joint, arm).unwrap();
            assert!((d - 25.0 / 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_propensity_gives_exactly_one() {
        let j = JointDistribution::from_pairs(&[(0.1, 0.3), (0.2, 0.3), (0.7, 0.3)]).unwrap();
        assert_eq!(closed_form_deff(&j, Arm::Control).unwrap(), 1.0);
        assert_eq!(closed_form_deff(&j, Arm::Treated).unwrap(), 1.0);
    }

    #[test]
    fn closed_form_rejects_positivity_violation() {
        let j = JointDistribution {
            cells: vec![Cell {
                label: "x".into(),
                p_l: 1.0,
                p_a1_given_l: 1.0,
            }],
        };
        assert!(matches!(
            closed_form_deff(&j, Arm::Treated),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn kish_hand_examples() {
        assert_eq!(kish_deff([2.0, 2.0, 2.0]), Some(1.0));
        assert!((kish_deff([1.0, 3.0]).unwrap() - 1.25).abs() < 1e-15);
        assert_eq!(kish_deff(std::iter::empty::<f64>()), None);
    }

    fn pilot(rows: &[(Arm, f64)]) -> (PilotDataset, WeightSet) {
        let data = PilotDataset {
            covariate_names: vec![],
            rows: rows
                .iter()
                .map(|&(a, _)| PilotRow {
                    a,
                    x: vec![],
                    y: None,
                })
                .collect(),
        };
        let w = WeightSet {
            entries: rows.iter().map(|&(a, w)| WeightEntry { a, w }).collect(),
        };
        (data, w)
    }

    #[test]
    fn kish_from_pilot_per_arm() {
        let (d, w) = pilot(&[
            (Arm::Treated, 1.0),
            (Arm::Treated, 3.0),
            (Arm::Control, 5.0),
        ]);
        assert!((kish_deff_from_pilot(&d, &w, Arm::Treated).unwrap() - 1.25).abs() < 1e-15);
        assert_eq!(kish_deff_from_pilot(&d, &w, Arm::Control).unwrap(), 1.0);
    }

    #[test]
    fn kish_from_pilot_errors() {
        let (d, w) = pilot(&[(Arm::Treated, 1.0), (Arm::Treated, 3.0)]);
        assert!(matches!(
            kish_deff_from_pilot(&d, &w, Arm::Control),
            Err(Error::EmptyArm(Arm::Control))
        ));
        let short = WeightSet {
            entries: w.entries[..1].to_vec(),
        };
        assert!(matches!(
            kish_deff_from_pilot(&d, &short, Arm::Treated),
            Err(Error::Alignment { .. })
        ));
    }

    #[test]
    fn outcome_independent_of_l_has_zero_remainder() {
        let s = presets::scenario2();
        let flat = vec![
            CellOutcome {
                y0: OutcomeLaw::Bernoulli { p: 0.4 },
                y1: OutcomeLaw::Normal {
                    mean: 3.0,
                    variance: 2.0
                },
            };
            2
        ];
        for arm in Arm::BOTH {
            let f = full_deff_with_remainder(&s.joint, &flat, arm).unwrap();
            assert!(f.remainder.abs() < 1e-15);
            assert!((f.deff - f.closed_form).abs() < 1e-14);
        }
    }

    #[test]
    fn scenario1_control_remainder() {
        // Hand enumeration: W0 = (2, 4), E W0 = 3.2,
        // E[(Y0 - mu)^2 | L] = (0.1419, 0.2339), R = 0.04416.
        let s = presets::scenario1();
        let f = full_deff_with_remainder(&s.joint, &s.outcomes, Arm::Control).unwrap();
        let expected = 0.35 / 0.1971 * 0.04416;
        assert!((f.remainder - expected).abs() < 1e-12, "{}", f.remainder);
        assert!((f.remainder - 0.08).abs() < 0.005);
    }

    #[test]
    fn scenario2_remainders() {
        let s = presets::scenario2();
        let p = full_pair(&s).unwrap();
        // R0 = 0.2222..., R1 = -0.0888...
        assert!((p.remainder0.unwrap() - 0.5 / 0.1875 * (2.0 / 9.0)).abs() < 1e-12);
        assert!((p.remainder1.unwrap() + 0.5 / 0.24 * (0.8 / 9.0)).abs() < 1e-12);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn bound_examples() {
        assert_eq!(remainder_bound(0.0, 5.0, 0.3, 1.0), 0.0);
        assert!((remainder_bound(1.0, 4.0, 0.5, 1.0) - 1.0).abs() < 1e-15);
        let s = presets::scenario1();
        let m = arm_moments(&s.joint, &s.outcomes, Arm::Control).unwrap();
        assert!(m.bound() >= m.remainder().abs());
    }

    #[test]
    fn transform_variance_matches_enumeration() {
        // Bernoulli cells: enumerate (L, Y) directly.
        let s = presets::scenario1();
        let m = arm_moments(&s.joint, &s.outcomes, Arm::Treated).unwrap();
        let mut e1 = 0.0;
        let mut e2 = 0.0;
        for (c, o) in s.joint.cells.iter().zip(&s.outcomes) {
            let p = o.y1.mean();
            for (y, py) in [(1.0, p), (0.0, 1.0 - p)] {
                let t: f64 = y * y - 2.0 * m.mu * y;
                e1 += c.p_l * py * t;
                e2 += c.p_l * py * t * t;
            }
        }
        assert!((m.var_transform - (e2 - e1 * e1)).abs() < 1e-12);
    }

    #[test]
    fn remainder_estimate_examples() {
        let units = |w: &[f64], y: &[f64]| -> Vec<RemainderUnit> {
            w.iter()
                .zip(y)
                .map(|(&w, &y)| RemainderUnit {
                    arm_weight: w,
                    outcome: Some(y),
                })
                .collect()
        };
        assert_eq!(
            remainder_estimate_from_sample(&units(&[2.0; 3], &[0.0, 5.0, 1.0]), 0.5, 1.0).unwrap(),
            0.0
        );
        assert_eq!(
            remainder_estimate_from_sample(&units(&[1.0, 3.0], &[0.0, 2.0]), 1.0, 1.0).unwrap(),
            0.0
        );
        // asymmetric: W = (1, 3), Y = (0, 0, 3) ... two units: Y = (0, 4) -> dev^2 = (4, 4) -> 0
        // three units: W = (1, 2, 3), Y = (0, 0, 3): mean W 2, mean Y 1, dev^2 = (1, 1, 4)
        // cross = ((-1)(1) + 0 + (1)(4)) / 3 = 1
        let r =
            remainder_estimate_from_sample(&units(&[1.0, 2.0, 3.0], &[0.0, 0.0, 3.0]), 0.5, 2.0)
                .unwrap();
        assert!((r - 0.25).abs() < 1e-15);
        let missing = [RemainderUnit {
            arm_weight: 1.0,
            outcome: None,
        }];
        assert!(matches!(
            remainder_estimate_from_sample(&missing, 1.0, 1.0),
            Err(Error::MissingOutcome(0))
        ));
    }

    #[test]
    fn effective_sizes() {
        assert_eq!(effective_sample_size(1000, 1.0), 1000.0);
        assert!((effective_sample_size(828, 2.78) - 297.84).abs() < 0.01);
        assert!((effective_sample_size(1566, 1.24) - 1262.9).abs() < 0.1);
    }
}
