//! The analysis a designed study would run: propensity model, inverse
//! probability of treatment weights, Hajek/MSM estimation and the stacked
//! sandwich variance.

mod logistic;
mod msm;
mod ols;
mod terms;

pub use logistic::{
    expit, fit_logistic, fit_propensity, iptw_weights, logit, weights_from_probabilities,
    PropensityFit, MAX_ITERATIONS, POSITIVITY_EPS, SEPARATION_COEFFICIENT, SEPARATION_PROBABILITY,
};
pub use msm::{
    analyze, analyze_system, fit_msm_sandwich, hajek_means, potential_outcome_moments, wald_test,
    wls_msm, HajekMeans, MsmAnalysis, OutcomeMoments, StackedSystem, WaldOutcome,
};
pub use ols::{fit_ols, OlsFit};
pub use terms::{DesignMatrix, DesignSpec, ModelTerms, Term};
