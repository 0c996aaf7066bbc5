use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::Arm;

/// A single violated invariant found while validating an input value.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Cell probabilities do not sum to one.
    ProbabilityMass { sum: f64 },
    /// A probability that must lie strictly inside (0, 1) does not.
    Positivity { index: usize, value: f64 },
    /// A probability outside [0, 1] or a non-finite value.
    OutOfRange {
        index: usize,
        field: String,
        value: f64,
    },
    /// No observations in a treatment arm.
    EmptyArm { arm: Arm },
    /// Covariate vector length differs from the dataset arity.
    Arity {
        index: usize,
        expected: usize,
        found: usize,
    },
    /// Spec has no cells at all.
    NoCells,
    /// Outcome laws do not line up with the joint distribution cells.
    OutcomeCells { expected: usize, found: usize },
    /// Stated effect size disagrees with the effect implied by the outcome laws.
    DeltaMismatch { stated: f64, implied: f64 },
    /// Anything else, described in words.
    Other { message: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ProbabilityMass { sum } => {
                write!(f, "ProbabilityMassError: cell probabilities sum to {sum}, expected 1")
            }
            Violation::Positivity { index, value } => write!(
                f,
                "PositivityError: P(A=1|L) = {value} at cell/row {index} is not strictly inside (0, 1)"
            ),
            Violation::OutOfRange { index, field, value } => {
                write!(f, "{field} = {value} out of range at index {index}")
            }
            Violation::EmptyArm { arm } => write!(f, "EmptyArmError: no units with A = {}", arm.index()),
            Violation::Arity { index, expected, found } => write!(
                f,
                "row {index} has {found} covariates, expected {expected}"
            ),
            Violation::NoCells => write!(f, "specification has no cells"),
            Violation::OutcomeCells { expected, found } => write!(
                f,
                "outcome model has {found} cells, joint distribution has {expected}"
            ),
            Violation::DeltaMismatch { stated, implied } => write!(
                f,
                "delta = {stated} but the outcome model implies E(Y1) - E(Y0) = {implied}"
            ),
            Violation::Other { message } => f.write_str(message),
        }
    }
}

/// Collected validation failures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violations(pub Vec<Violation>);

impl Violations {
    pub fn iter(&self) -> impl Iterator<Item = &Violation> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Invalid(Violations),

    #[error(
        "PositivityError: estimated probability {value} at row {index} is outside (eps, 1 - eps)"
    )]
    Positivity { index: usize, value: f64 },

    #[error("EmptyArmError: no units with A = {}", .0.index())]
    EmptyArm(Arm),

    #[error("AlignmentError: {what} has {found} entries, expected {expected}")]
    Alignment {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("MissingOutcomeError: row {0} has no outcome")]
    MissingOutcome(usize),

    #[error("InvalidInputsError: {0}")]
    InvalidInputs(String),

    #[error("DomainError: {0}")]
    Domain(String),

    #[error("SeparationError: {0}")]
    Separation(String),

    #[error("RankDeficiencyError: design matrix with {columns} columns is not of full rank")]
    RankDeficiency { columns: usize },

    #[error("NonConvergenceError: no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("SingularBreadError: Jacobian of the estimating equations is numerically singular")]
    SingularBread,

    #[error("DegenerateVarianceError: variance {0} is not positive")]
    DegenerateVariance(f64),

    #[error(
        "UnachievableTargetError: design effect {0} cannot be produced (need 1 < target <= 1000)"
    )]
    UnachievableTarget(f64),

    #[error("ResampleBudgetExceeded: no draw within tolerance after {attempts} attempts (last realized {last})")]
    ResampleBudgetExceeded { attempts: usize, last: f64 },

    #[error(
        "simulation aborted: {failed} of {replications} replications failed (first: {first_error})"
    )]
    SimulationAborted {
        failed: usize,
        replications: usize,
        first_error: String,
    },

    #[error("SchemaError: {0}")]
    Schema(String),

    #[error("MissingColumnError: column '{0}' not found in header")]
    MissingColumn(String),

    #[error("ParseError: row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("IncompleteRowsError: rows {rows:?} are missing required fields")]
    IncompleteRows { rows: Vec<usize> },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by bad user input, as opposed to failures while computing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_)
                | Error::InvalidInputs(_)
                | Error::Domain(_)
                | Error::UnachievableTarget(_)
                | Error::Schema(_)
                | Error::MissingColumn(_)
                | Error::Parse { .. }
                | Error::IncompleteRows { .. }
                | Error::Config(_)
                | Error::Alignment { .. }
                | Error::EmptyArm(_)
                | Error::MissingOutcome(_)
        )
    }

    /// Short machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Invalid(_) => "ValidationError",
            Error::Positivity { .. } => "PositivityError",
            Error::EmptyArm(_) => "EmptyArmError",
            Error::Alignment { .. } => "AlignmentError",
            Error::MissingOutcome(_) => "MissingOutcomeError",
            Error::InvalidInputs(_) => "InvalidInputsError",
            Error::Domain(_) => "DomainError",
            Error::Separation(_) => "SeparationError",
            Error::RankDeficiency { .. } => "RankDeficiencyError",
            Error::NonConvergence { .. } => "NonConvergenceError",
            Error::SingularBread => "SingularBreadError",
            Error::DegenerateVariance(_) => "DegenerateVarianceError",
            Error::UnachievableTarget(_) => "UnachievableTargetError",
            Error::ResampleBudgetExceeded { .. } => "ResampleBudgetExceeded",
            Error::SimulationAborted { .. } => "SimulationAborted",
            Error::Schema(_) => "SchemaError",
            Error::MissingColumn(_) => "MissingColumnError",
            Error::Parse { .. } => "ParseError",
            Error::IncompleteRows { .. } => "IncompleteRowsError",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
            Error::Csv(_) => "CsvError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
