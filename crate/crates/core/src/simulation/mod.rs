//! Monte Carlo checks of a design: repeated samples are drawn, analyzed
//! with the full IPTW/MSM pipeline, and tested; the rejection fraction is
//! the empirical power.
//!
//! Replications are independent and run in parallel. Each one draws from its
//! own [`seed_stream`], and results are aggregated in replication order, so
//! a report is bit-identical for a given seed whatever the thread count.

mod generative;
mod resample;
mod rng;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use generative::{generate_superpopulation, run_generative_power, Superpopulation};
pub use resample::{
    prepare_resample, run_resample_power, ResamplePopulation, ResampleSpec, ShiftRule,
};
pub use rng::{seed_stream, SUPERPOPULATION_STREAM};

use crate::error::{Error, Result};
use crate::model::SimulationReport;

pub const DEFAULT_REPLICATIONS: usize = 2000;
pub const DEFAULT_SUPERPOPULATION: usize = 1_000_000;
/// Abort when more than this fraction of replications fail to fit.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Run-level settings shared by both protocols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_superpopulation")]
    pub superpopulation_size: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Worker threads; `None` uses the ambient rayon pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

fn default_superpopulation() -> usize {
    DEFAULT_SUPERPOPULATION
}

fn default_alpha() -> f64 {
    0.05
}

impl SimulationConfig {
    pub fn new(n: usize, replications: usize, seed: u64) -> Self {
        SimulationConfig {
            n,
            replications,
            seed,
            superpopulation_size: DEFAULT_SUPERPOPULATION,
            alpha: 0.05,
            threads: None,
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    pub fn with_superpopulation(mut self, size: usize) -> Self {
        self.superpopulation_size = size;
        self
    }

    fn check(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::InvalidInputs(format!(
                "sample size {} is too small",
                self.n
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidInputs("replications must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInputs(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidInputs("thread count must be positive".into()));
        }
        Ok(())
    }
}

/// What one successful replication contributes to the report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ReplicationOutcome {
    pub reject: bool,
    pub er0: f64,
    pub er1: f64,
    pub ace: f64,
    pub var_ace: f64,
    pub covered: bool,
}

/// Runs `f` for every replication index on the configured pool.
pub(crate) fn run_replications<F>(
    config: &SimulationConfig,
    f: F,
) -> Result<Vec<Result<ReplicationOutcome>>>
where
    F: Fn(u64) -> Result<ReplicationOutcome> + Sync + Send,
{
    let work = || {
        (0..config.replications as u64)
            .into_par_iter()
            .map(&f)
            .collect::<Vec<_>>()
    };
    match config.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidInputs(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

/// Folds replication outcomes, in index order, into a report.
pub(crate) fn aggregate(
    scenario: &str,
    config: &SimulationConfig,
    true_ace: f64,
    results: Vec<Result<ReplicationOutcome>>,
) -> Result<SimulationReport> {
    let mut ok = Vec::with_capacity(results.len());
    let mut failed = 0usize;
    let mut first_error = None;
    for r in results {
        match r {
            Ok(o) => ok.push(o),
            Err(e) => {
                failed += 1;
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let total = config.replications;
    if failed as f64 > MAX_FAILURE_RATE * total as f64 || ok.is_empty() {
        return Err(Error::SimulationAborted {
            failed,
            replications: total,
            first_error: first_error.unwrap_or_default(),
        });
    }
    let m = ok.len() as f64;
    let rejections = ok.iter().filter(|o| o.reject).count();
    let power = rejections as f64 / m;
    let mean = |f: fn(&ReplicationOutcome) -> f64| ok.iter().map(f).sum::<f64>() / m;
    let mean_ace = mean(|o| o.ace);
    let empirical_var = if ok.len() > 1 {
        ok.iter().map(|o| (o.ace - mean_ace).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    Ok(SimulationReport {
        scenario: scenario.to_string(),
        n_used: config.n,
        replications: total,
        seed: config.seed,
        empirical_power: power,
        mean_er0: mean(|o| o.er0),
        mean_er1: mean(|o| o.er1),
        mc_stderr: (power * (1.0 - power) / m).sqrt(),
        rejections,
        completed: ok.len(),
        failed,
        mean_sandwich_var: mean(|o| o.var_ace),
        empirical_var,
        coverage: ok.iter().filter(|o| o.covered).count() as f64 / m,
        true_ace,
    })
}
