use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "ipw-design",
    version,
    about = "Design effects, sample size and power for IPTW/MSM studies"
)]
pub struct Cli {
    /// Standard output format.
    #[arg(long, value_enum, global = true, default_value_t = Format::Text)]
    pub format: Format,

    /// Also write the JSON report record to this file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArmChoice {
    #[value(name = "0")]
    Control,
    #[value(name = "1")]
    Treated,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Design effects due to weighting.
    #[command(subcommand)]
    Deff(DeffCommand),
    /// Required sample size, with the unweighted comparison.
    Samplesize {
        #[arg(long)]
        inputs: PathBuf,
    },
    /// Power at a given total sample size.
    Power {
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        n: u64,
    },
    /// Monte Carlo power.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Illustrative weight distributions.
    #[command(subcommand)]
    Weights(WeightsCommand),
}

#[derive(Debug, Subcommand)]
pub enum DeffCommand {
    /// From an assumed joint law of confounder cells and treatment.
    Assume {
        /// Joint-law or scenario file; a scenario file adds the remainders.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum, default_value_t = ArmChoice::Both)]
        arm: ArmChoice,
    },
    /// Kish design effect of estimated weights in pilot data.
    Pilot {
        #[arg(long)]
        data: PathBuf,
        /// Column mapping and propensity model terms.
        #[arg(long)]
        terms: PathBuf,
        #[arg(long, value_enum, default_value_t = ArmChoice::Both)]
        arm: ArmChoice,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Total sample size per replication.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 2000)]
    pub reps: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Worker threads (default: all cores).
    #[arg(long, env = "IPW_DESIGN_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Samples drawn without replacement from a generated superpopulation.
    Generative {
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1_000_000)]
        superpopulation: usize,
    },
    /// Samples drawn with replacement from fitted models of a dataset.
    Resample {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum WeightsCommand {
    /// Reciprocal-beta weights with a target design effect.
    Gen {
        #[arg(long)]
        deff: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Redraw until the realized design effect is this close to the target.
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long, default_value_t = 50)]
        max_attempts: usize,
        /// Write `bin_left,count` histogram data here.
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
}
