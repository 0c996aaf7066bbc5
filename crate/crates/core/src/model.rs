//! Shared domain types and their invariants.
//!
//! Everything here is plain data: immutable after construction and safe to
//! share between threads. Validation is the only logic.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Violation, Violations};

/// Absolute tolerance for probabilities that must sum to one.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Tolerance for the stated effect size against the one implied by the outcome laws.
pub const DELTA_TOLERANCE: f64 = 1e-9;

/// Binary treatment level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treated];

    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn from_index(a: u8) -> Option<Arm> {
        match a {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treated),
            _ => None,
        }
    }

    pub fn from_bool(treated: bool) -> Arm {
        if treated {
            Arm::Treated
        } else {
            Arm::Control
        }
    }

    pub fn is_treated(self) -> bool {
        self == Arm::Treated
    }

    /// The 0/1 treatment indicator.
    pub fn indicator(self) -> f64 {
        self.index() as f64
    }

    /// Probability of receiving this arm given P(A=1 | L).
    pub fn probability(self, p_treated: f64) -> f64 {
        match self {
            Arm::Control => 1.0 - p_treated,
            Arm::Treated => p_treated,
        }
    }
}

impl Serialize for Arm {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.index() as u8)
    }
}

impl<'de> Deserialize<'de> for Arm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = u8::deserialize(d)?;
        Arm::from_index(raw)
            .ok_or_else(|| serde::de::Error::custom(format!("treatment must be 0 or 1, got {raw}")))
    }
}

/// Values that can check their own invariants.
pub trait Validate: Sized {
    /// Every violated invariant, with cell or row indices.
    fn violations(&self) -> Vec<Violation>;

    /// Returns the value unchanged when all invariants hold.
    fn validate(self) -> Result<Self, Violations> {
        let found = self.violations();
        if found.is_empty() {
            Ok(self)
        } else {
            Err(Violations(found))
        }
    }
}

fn check_unit_interval(out: &mut Vec<Violation>, index: usize, field: &str, value: f64) {
    if !(0.0..=1.0).contains(&value) {
        out.push(Violation::OutOfRange {
            index,
            field: field.to_string(),
            value,
        });
    }
}

/// One confounder stratum of a discrete joint law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    /// P(L = l).
    pub p_l: f64,
    /// P(A = 1 | L = l).
    pub p_a1_given_l: f64,
}

/// Discrete joint law of confounder cells and treatment probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    pub cells: Vec<Cell>,
}

impl JointDistribution {
    pub fn new(cells: Vec<Cell>) -> Result<Self, Violations> {
        JointDistribution { cells }.validate()
    }

    /// Shorthand for building from `(p_l, p_a1_given_l)` pairs labelled `L=0, L=1, ...`.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self, Violations> {
        Self::new(
            pairs
                .iter()
                .enumerate()
                .map(|(i, &(p_l, p_a))| Cell {
                    label: format!("L={i}"),
                    p_l,
                    p_a1_given_l: p_a,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.p_l).sum()
    }

    /// Marginal P(A = a).
    pub fn arm_probability(&self, arm: Arm) -> f64 {
        self.cells
            .iter()
            .map(|c| c.p_l * arm.probability(c.p_a1_given_l))
            .sum()
    }

    /// Odds of treatment, P(A=1) / P(A=0).
    pub fn treatment_odds(&self) -> f64 {
        self.arm_probability(Arm::Treated) / self.arm_probability(Arm::Control)
    }
}

impl Validate for JointDistribution {
    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.cells.is_empty() {
            out.push(Violation::NoCells);
            return out;
        }
        for (i, c) in self.cells.iter().enumerate() {
            check_unit_interval(&mut out, i, "p_l", c.p_l);
            if !(c.p_a1_given_l > 0.0 && c.p_a1_given_l < 1.0) {
                out.push(Violation::Positivity {
                    index: i,
                    value: c.p_a1_given_l,
                });
            }
        }
        let sum = self.total_mass();
        if sum.is_nan() || (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            out.push(Violation::ProbabilityMass { sum });
        }
        out
    }
}

/// Conditional law of a potential outcome within one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum OutcomeLaw {
    Bernoulli { p: f64 },
    Normal { mean: f64, variance: f64 },
}

impl OutcomeLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            OutcomeLaw::Bernoulli { p } => p,
            OutcomeLaw::Normal { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            OutcomeLaw::Bernoulli { p } => p * (1.0 - p),
            OutcomeLaw::Normal { variance, .. } => variance,
        }
    }

    /// E[(Y - E Y)^3].
    pub fn third_central_moment(&self) -> f64 {
        match *self {
            OutcomeLaw::Bernoulli { p } => p * (1.0 - p) * (1.0 - 2.0 * p),
            OutcomeLaw::Normal { .. } => 0.0,
        }
    }

    /// E[(Y - E Y)^4].
    pub fn fourth_central_moment(&self) -> f64 {
        match *self {
            OutcomeLaw::Bernoulli { p } => p * (1.0 - p) * (1.0 - 3.0 * p + 3.0 * p * p),
            OutcomeLaw::Normal { variance, .. } => 3.0 * variance * variance,
        }
    }

    fn violations(&self, index: usize, field: &str, out: &mut Vec<Violation>) {
        match *self {
            OutcomeLaw::Bernoulli { p } => check_unit_interval(out, index, field, p),
            OutcomeLaw::Normal { mean, variance } => {
                if !mean.is_finite() {
                    out.push(Violation::OutOfRange {
                        index,
                        field: format!("{field}.mean"),
                        value: mean,
                    });
                }
                if !(variance > 0.0 && variance.is_finite()) {
                    out.push(Violation::OutOfRange {
                        index,
                        field: format!("{field}.variance"),
                        value: variance,
                    });
                }
            }
        }
    }
}

/// Potential-outcome laws for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub y0: OutcomeLaw,
    pub y1: OutcomeLaw,
}

impl CellOutcome {
    pub fn law(&self, arm: Arm) -> &OutcomeLaw {
        match arm {
            Arm::Control => &self.y0,
            Arm::Treated => &self.y1,
        }
    }
}

/// Full generative specification of a simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub joint: JointDistribution,
    /// One entry per joint cell, in the same order.
    pub outcomes: Vec<CellOutcome>,
    pub delta: f64,
}

impl ScenarioSpec {
    /// Marginal E(Y_a).
    pub fn marginal_mean(&self, arm: Arm) -> f64 {
        self.joint
            .cells
            .iter()
            .zip(&self.outcomes)
            .map(|(c, o)| c.p_l * o.law(arm).mean())
            .sum()
    }

    /// Marginal Var(Y_a) by the law of total variance.
    pub fn marginal_variance(&self, arm: Arm) -> f64 {
        let mu = self.marginal_mean(arm);
        self.joint
            .cells
            .iter()
            .zip(&self.outcomes)
            .map(|(c, o)| {
                let law = o.law(arm);
                let d = law.mean() - mu;
                c.p_l * (law.variance() + d * d)
            })
            .sum()
    }

    /// E(Y_1) - E(Y_0) implied by the outcome laws.
    pub fn implied_delta(&self) -> f64 {
        self.marginal_mean(Arm::Treated) - self.marginal_mean(Arm::Control)
    }
}

impl Validate for ScenarioSpec {
    fn violations(&self) -> Vec<Violation> {
        let mut out = self.joint.violations();
        if self.outcomes.len() != self.joint.len() {
            out.push(Violation::OutcomeCells {
                expected: self.joint.len(),
                found: self.outcomes.len(),
            });
            return out;
        }
        for (i, o) in self.outcomes.iter().enumerate() {
            o.y0.violations(i, "y0", &mut out);
            o.y1.violations(i, "y1", &mut out);
        }
        if out.is_empty() {
            let implied = self.implied_delta();
            if implied.is_nan() || (implied - self.delta).abs() > DELTA_TOLERANCE {
                out.push(Violation::DeltaMismatch {
                    stated: self.delta,
                    implied,
                });
            }
        }
        out
    }
}

/// One observation of pilot or analysis data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotRow {
    pub a: Arm,
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
}

/// Rows of (treatment, covariates, optional outcome).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotDataset {
    pub covariate_names: Vec<String>,
    pub rows: Vec<PilotRow>,
}

impl PilotDataset {
    pub fn new(covariate_names: Vec<String>, rows: Vec<PilotRow>) -> Result<Self, Violations> {
        PilotDataset {
            covariate_names,
            rows,
        }
        .validate()
    }

    pub fn arity(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn arm_count(&self, arm: Arm) -> usize {
        self.rows.iter().filter(|r| r.a == arm).count()
    }

    pub fn has_outcomes(&self) -> bool {
        self.rows.iter().all(|r| r.y.is_some())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }
}

impl Validate for PilotDataset {
    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let arity = self.arity();
        for (i, r) in self.rows.iter().enumerate() {
            if r.x.len() != arity {
                out.push(Violation::Arity {
                    index: i,
                    expected: arity,
                    found: r.x.len(),
                });
            }
            if let Some(j) = r.x.iter().position(|v| !v.is_finite()) {
                out.push(Violation::OutOfRange {
                    index: i,
                    field: self.covariate_names.get(j).cloned().unwrap_or_default(),
                    value: r.x[j],
                });
            }
            if let Some(y) = r.y {
                if !y.is_finite() {
                    out.push(Violation::OutOfRange {
                        index: i,
                        field: "y".into(),
                        value: y,
                    });
                }
            }
        }
        for arm in Arm::BOTH {
            if self.arm_count(arm) == 0 {
                out.push(Violation::EmptyArm { arm });
            }
        }
        out
    }
}

/// A single inverse-probability weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub a: Arm,
    pub w: f64,
}

/// Inverse-probability weights, aligned to the rows they were computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub entries: Vec<WeightEntry>,
}

impl WeightSet {
    pub fn new(entries: Vec<WeightEntry>) -> Result<Self, Violations> {
        WeightSet { entries }.validate()
    }

    /// All weights placed in one arm.
    pub fn single_arm(arm: Arm, weights: &[f64]) -> Result<Self, Violations> {
        Self::new(weights.iter().map(|&w| WeightEntry { a: arm, w }).collect())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn arm_weights(&self, arm: Arm) -> impl Iterator<Item = f64> + Clone + '_ {
        self.entries.iter().filter(move |e| e.a == arm).map(|e| e.w)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + Clone + '_ {
        self.entries.iter().map(|e| e.w)
    }

    /// Multiplies every weight by `c`.
    pub fn scaled(&self, c: f64) -> WeightSet {
        WeightSet {
            entries: self
                .entries
                .iter()
                .map(|e| WeightEntry { a: e.a, w: e.w * c })
                .collect(),
        }
    }
}

impl Validate for WeightSet {
    fn violations(&self) -> Vec<Violation> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| !(e.w > 0.0 && e.w.is_finite()))
            .map(|(i, e)| Violation::OutOfRange {
                index: i,
                field: "w".into(),
                value: e.w,
            })
            .collect()
    }
}

/// How a design effect was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeffMethod {
    /// Exact evaluation over an assumed joint law of (L, A).
    ClosedForm,
    /// Kish form applied to estimated weights from pilot data.
    PilotKish,
    /// Closed form plus the outcome-dependent remainder.
    FullWithRemainder,
    /// Entered directly by the user.
    Assumed,
}

/// Per-arm design effects due to weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignEffectPair {
    pub deff0: f64,
    pub deff1: f64,
    pub method: DeffMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remainder0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remainder1: Option<f64>,
}

impl DesignEffectPair {
    pub fn new(deff0: f64, deff1: f64, method: DeffMethod) -> Result<Self, Violations> {
        DesignEffectPair {
            deff0,
            deff1,
            method,
            remainder0: None,
            remainder1: None,
        }
        .validate()
    }

    pub fn with_remainder(
        deff0: f64,
        deff1: f64,
        remainder0: f64,
        remainder1: f64,
    ) -> Result<Self, Violations> {
        DesignEffectPair {
            deff0,
            deff1,
            method: DeffMethod::FullWithRemainder,
            remainder0: Some(remainder0),
            remainder1: Some(remainder1),
        }
        .validate()
    }

    /// No inflation: the randomized-trial design.
    pub fn none() -> Self {
        DesignEffectPair {
            deff0: 1.0,
            deff1: 1.0,
            method: DeffMethod::Assumed,
            remainder0: None,
            remainder1: None,
        }
    }

    pub fn get(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Control => self.deff0,
            Arm::Treated => self.deff1,
        }
    }

    pub fn remainder(&self, arm: Arm) -> Option<f64> {
        match arm {
            Arm::Control => self.remainder0,
            Arm::Treated => self.remainder1,
        }
    }
}

impl Validate for DesignEffectPair {
    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let needs_unit_floor = self.method != DeffMethod::FullWithRemainder;
        for (i, d) in [self.deff0, self.deff1].into_iter().enumerate() {
            let ok = if needs_unit_floor {
                d >= 1.0 && d.is_finite()
            } else {
                d > 0.0 && d.is_finite()
            };
            if !ok {
                out.push(Violation::OutOfRange {
                    index: i,
                    field: format!("deff{i}"),
                    value: d,
                });
            }
        }
        let has_remainder = self.remainder0.is_some() && self.remainder1.is_some();
        let any_remainder = self.remainder0.is_some() || self.remainder1.is_some();
        match (
            self.method == DeffMethod::FullWithRemainder,
            has_remainder,
            any_remainder,
        ) {
            (true, true, _) | (false, _, false) => {}
            (true, false, _) => out.push(Violation::Other {
                message: "full_with_remainder design effects need both remainder fields".into(),
            }),
            (false, _, true) => out.push(Violation::Other {
                message: "remainder fields are only allowed with method full_with_remainder".into(),
            }),
        }
        out
    }
}

/// Randomized-trial style assumptions plus design effects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignInputs {
    /// Two-sided type I error rate.
    pub alpha: f64,
    /// Target power, 1 - beta.
    pub power: f64,
    /// Effect size in outcome units.
    pub delta: f64,
    /// Odds of treatment, P(A=1) / P(A=0).
    pub k: f64,
    pub sigma0sq: f64,
    pub sigma1sq: f64,
    pub deff: DesignEffectPair,
}

impl DesignInputs {
    /// The same assumptions with design effects removed.
    pub fn naive(&self) -> DesignInputs {
        DesignInputs {
            deff: DesignEffectPair::none(),
            ..*self
        }
    }

    /// P(A = 1) implied by the odds k.
    pub fn p_treated(&self) -> f64 {
        self.k / (1.0 + self.k)
    }
}

impl Validate for DesignInputs {
    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |field: &str, value: f64| {
            out.push(Violation::OutOfRange {
                index: 0,
                field: field.into(),
                value,
            })
        };
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bad("alpha", self.alpha);
        }
        if !(self.power > 0.0 && self.power < 1.0) {
            bad("power", self.power);
        }
        if !(self.delta != 0.0 && self.delta.is_finite()) {
            bad("delta", self.delta);
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            bad("k", self.k);
        }
        if !(self.sigma0sq > 0.0 && self.sigma0sq.is_finite()) {
            bad("sigma0sq", self.sigma0sq);
        }
        if !(self.sigma1sq > 0.0 && self.sigma1sq.is_finite()) {
            bad("sigma1sq", self.sigma1sq);
        }
        out.extend(self.deff.violations());
        out
    }
}

/// Outcome variances inflated by the design effects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustedVariances {
    pub sigma0adj: f64,
    pub sigma1adj: f64,
}

impl AdjustedVariances {
    pub fn get(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Control => self.sigma0adj,
            Arm::Treated => self.sigma1adj,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeResult {
    pub n_total: u64,
    pub n_treated: u64,
    pub n_control: u64,
    /// Power recomputed at `n_total`.
    pub achieved_power: f64,
}

/// Whether the propensity model's estimation is propagated into the variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightTreatment {
    Estimated,
    Known,
}

/// Fitted MSM E(Y_a) = beta0 + beta1 * a with its sandwich covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsmFit {
    pub beta0: f64,
    pub beta1: f64,
    pub cov: [[f64; 2]; 2],
    pub wald_z: f64,
    pub p_value: f64,
    pub weights_treated_as: WeightTreatment,
}

impl MsmFit {
    pub fn var_ace(&self) -> f64 {
        self.cov[1][1]
    }
}

/// Aggregated outcome of a Monte Carlo power run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenario: String,
    pub n_used: usize,
    /// Replications requested.
    pub replications: usize,
    pub seed: u64,
    /// Rejections over completed replications.
    pub empirical_power: f64,
    pub mean_er0: f64,
    pub mean_er1: f64,
    /// sqrt(p (1 - p) / R) over completed replications.
    pub mc_stderr: f64,
    pub rejections: usize,
    pub completed: usize,
    pub failed: usize,
    /// Mean of the sandwich Var(ACE) over completed replications.
    pub mean_sandwich_var: f64,
    /// Monte Carlo variance of the ACE estimates.
    pub empirical_var: f64,
    /// Fraction of 1 - alpha Wald intervals covering the true effect.
    pub coverage: f64,
    pub true_ace: f64,
}
