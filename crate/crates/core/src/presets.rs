//! The four generative benchmark scenarios: binary or continuous outcome,
//! crossed with mild or strong confounding of treatment by a binary L.

use crate::deff::closed_form_pair;
use crate::model::{
    Arm, CellOutcome, DeffMethod, DesignEffectPair, DesignInputs, JointDistribution, OutcomeLaw,
    ScenarioSpec, Validate,
};

fn mild_confounding() -> JointDistribution {
    JointDistribution::from_pairs(&[(0.4, 0.5), (0.6, 0.75)]).expect("valid preset")
}

fn strong_confounding() -> JointDistribution {
    JointDistribution::from_pairs(&[(0.5, 0.1), (0.5, 0.9)]).expect("valid preset")
}

/// Y0 | L ~ B(0.85 - 0.2L), Y1 | L ~ B(0.70 - 0.2L).
fn binary_outcomes() -> Vec<CellOutcome> {
    (0..2)
        .map(|l| {
            let l = l as f64;
            CellOutcome {
                y0: OutcomeLaw::Bernoulli { p: 0.85 - 0.2 * l },
                y1: OutcomeLaw::Bernoulli { p: 0.70 - 0.2 * l },
            }
        })
        .collect()
}

/// Y0 | L ~ N(20 - 10L, 144), Y1 | L ~ N(25 - 10L, 256).
fn continuous_outcomes() -> Vec<CellOutcome> {
    (0..2)
        .map(|l| {
            let l = l as f64;
            CellOutcome {
                y0: OutcomeLaw::Normal {
                    mean: 20.0 - 10.0 * l,
                    variance: 144.0,
                },
                y1: OutcomeLaw::Normal {
                    mean: 25.0 - 10.0 * l,
                    variance: 256.0,
                },
            }
        })
        .collect()
}

fn build(
    name: &str,
    joint: JointDistribution,
    outcomes: Vec<CellOutcome>,
    delta: f64,
) -> ScenarioSpec {
    ScenarioSpec {
        name: name.to_string(),
        joint,
        outcomes,
        delta,
    }
    .validate()
    .expect("valid preset")
}

pub fn scenario1() -> ScenarioSpec {
    build("scenario-1", mild_confounding(), binary_outcomes(), -0.15)
}

pub fn scenario2() -> ScenarioSpec {
    build("scenario-2", strong_confounding(), binary_outcomes(), -0.15)
}

pub fn scenario3() -> ScenarioSpec {
    build("scenario-3", mild_confounding(), continuous_outcomes(), 5.0)
}

pub fn scenario4() -> ScenarioSpec {
    build(
        "scenario-4",
        strong_confounding(),
        continuous_outcomes(),
        5.0,
    )
}

/// Scenario by number, 1 through 4.
pub fn scenario(number: usize) -> Option<ScenarioSpec> {
    match number {
        1 => Some(scenario1()),
        2 => Some(scenario2()),
        3 => Some(scenario3()),
        4 => Some(scenario4()),
        _ => None,
    }
}

/// All four, in order.
pub fn all() -> Vec<ScenarioSpec> {
    (1..=4).filter_map(scenario).collect()
}

/// Design inputs implied by a scenario: 80% power at alpha 0.05, variances
/// and treatment odds from the laws, and closed-form design effects.
pub fn design_inputs(spec: &ScenarioSpec) -> DesignInputs {
    DesignInputs {
        alpha: 0.05,
        power: 0.8,
        delta: spec.delta,
        k: spec.joint.treatment_odds(),
        sigma0sq: spec.marginal_variance(Arm::Control),
        sigma1sq: spec.marginal_variance(Arm::Treated),
        deff: closed_form_pair(&spec.joint).expect("valid preset"),
    }
}

/// The same confounding with `Y1 | L` distributed as `Y0 | L`, so the
/// causal effect is zero.
pub fn null_version(spec: &ScenarioSpec) -> ScenarioSpec {
    let mut s = spec.clone();
    for o in &mut s.outcomes {
        o.y1 = o.y0;
    }
    s.delta = 0.0;
    s.name = format!("{}-null", spec.name);
    s
}

/// Weight-gain study designed from NHEFS smokers: design effects 1.03 and
/// 1.24 estimated from the pilot weights, effect of 2 kg.
pub fn nhefs_design_inputs() -> DesignInputs {
    DesignInputs {
        alpha: 0.05,
        power: 0.8,
        delta: 2.0,
        k: 0.346,
        sigma0sq: 56.1,
        sigma1sq: 74.0,
        deff: DesignEffectPair::new(1.03, 1.24, DeffMethod::Assumed).expect("valid preset"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Arm;

    #[test]
    fn stated_deltas_match_outcome_laws() {
        for s in all() {
            assert!((s.implied_delta() - s.delta).abs() < 1e-9, "{}", s.name);
        }
    }

    #[test]
    fn marginal_variances() {
        let expected = [
            (0.1971, 0.2436),
            (0.1875, 0.2400),
            (168.0, 280.0),
            (169.0, 281.0),
        ];
        for (s, (v0, v1)) in all().iter().zip(expected) {
            assert!(
                (s.marginal_variance(Arm::Control) - v0).abs() < 1e-9,
                "{}",
                s.name
            );
            assert!(
                (s.marginal_variance(Arm::Treated) - v1).abs() < 1e-9,
                "{}",
                s.name
            );
        }
    }
}
