//! Study design for observational studies analyzed with marginal structural
//! models fit by inverse probability of treatment weighting (IPTW).
//!
//! The workflow mirrors randomized-trial planning with one extra step:
//!
//! 1. approximate per-arm design effects due to weighting, either from an
//!    assumed joint law of confounders and treatment ([`deff::closed_form_deff`])
//!    or from pilot data ([`deff::kish_deff_from_pilot`]);
//! 2. inflate the outcome variances by those design effects
//!    ([`design::adjusted_variances`]);
//! 3. compute sample size or power as for a two-arm trial
//!    ([`design::required_sample_size`], [`design::compute_power`]).
//!
//! The [`simulation`] module checks the resulting designs by Monte Carlo,
//! running the full analysis pipeline of [`estimation`] on each replicate.

pub mod deff;
pub mod design;
pub mod error;
pub mod estimation;
pub mod io;
pub mod model;
pub mod normal;
pub mod presets;
pub mod simulation;
pub mod weightgen;

pub use error::{Error, Result, Violation, Violations};
pub use model::{
    AdjustedVariances, Arm, Cell, CellOutcome, DeffMethod, DesignEffectPair, DesignInputs,
    JointDistribution, MsmFit, OutcomeLaw, PilotDataset, PilotRow, SampleSizeResult, ScenarioSpec,
    SimulationReport, Validate, WeightEntry, WeightSet, WeightTreatment,
};

/// Crate version, recorded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
