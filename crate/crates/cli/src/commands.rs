use std::path::Path;

use ipw_design::deff::{closed_form_pair, full_pair, pilot_pair};
use ipw_design::design::{compare_with_naive, compute_power, PowerInputs};
use ipw_design::estimation::{fit_propensity, iptw_weights};
use ipw_design::io::report::{self, Report};
use ipw_design::io::{
    read_pilot_csv_with, read_toml, DesignInputsFile, JointFile, ResampleFile, ScenarioFile,
    TermsFile,
};
use ipw_design::simulation::{run_generative_power, run_resample_power, SimulationConfig};
use ipw_design::weightgen::{sample_weight_distribution, Acceptance, Histogram};
use ipw_design::{Arm, DesignEffectPair, Error, Result};
use serde_json::json;

use crate::args::{ArmChoice, Cli, Command, DeffCommand, RunArgs, SimulateCommand, WeightsCommand};

pub fn run(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::Deff(DeffCommand::Assume { spec, arm }) => deff_assume(spec, *arm),
        Command::Deff(DeffCommand::Pilot { data, terms, arm }) => deff_pilot(data, terms, *arm),
        Command::Samplesize { inputs } => samplesize(inputs),
        Command::Power { inputs, n } => power(inputs, *n),
        Command::Simulate(SimulateCommand::Generative {
            scenario,
            run,
            superpopulation,
        }) => simulate_generative(scenario, run, *superpopulation),
        Command::Simulate(SimulateCommand::Resample { data, config, run }) => {
            simulate_resample(data, config, run)
        }
        Command::Weights(WeightsCommand::Gen {
            deff,
            n,
            seed,
            tolerance,
            max_attempts,
            histogram,
        }) => weights_gen(
            *deff,
            *n,
            *seed,
            *tolerance,
            *max_attempts,
            histogram.as_deref(),
        ),
    }
}

fn arms(choice: ArmChoice) -> Vec<Arm> {
    match choice {
        ArmChoice::Control => vec![Arm::Control],
        ArmChoice::Treated => vec![Arm::Treated],
        ArmChoice::Both => Arm::BOTH.to_vec(),
    }
}

fn deff_assume(path: &Path, arm: ArmChoice) -> Result<Report> {
    let text = std::fs::read_to_string(path)?;
    // A scenario file carries outcome laws, which give the remainders too.
    if let Ok(file) = ipw_design::io::parse_toml::<ScenarioFile>(&text) {
        let spec = file.into_spec()?;
        let pair = closed_form_pair(&spec.joint)?;
        let full = full_pair(&spec)?;
        let mut out = report::deff_text(&pair, &arms(arm));
        out += &report::deff_text(&full, &arms(arm));
        let result = json!({ "closed_form": pair, "with_remainder": full });
        return Report::new("deff assume", &spec, &result, out);
    }
    let joint = ipw_design::io::parse_toml::<JointFile>(&text)?.into_joint()?;
    let pair = closed_form_pair(&joint)?;
    let out = report::deff_text(&pair, &arms(arm));
    Report::new("deff assume", &joint, &pair, out)
}

fn deff_pilot(data: &Path, terms: &Path, arm: ArmChoice) -> Result<Report> {
    let file: TermsFile = read_toml(terms)?;
    let loaded = read_pilot_csv_with(data, &file.schema, file.missing)?;
    let fit = fit_propensity(&loaded.data, &file.terms)?;
    let weights = iptw_weights(&fit, &loaded.data)?;
    let pair = pilot_pair(&loaded.data, &weights)?;
    let mut text = format!(
        "{} rows ({} treated, {} dropped as incomplete)\n",
        loaded.data.len(),
        loaded.data.arm_count(Arm::Treated),
        loaded.dropped.len()
    );
    text += &report::deff_text(&pair, &arms(arm));
    let result = json!({
        "deff": pair,
        "rows": loaded.data.len(),
        "dropped_rows": loaded.dropped,
        "propensity": {
            "terms": fit.design_spec.names,
            "coefficients": fit.gamma,
            "iterations": fit.iterations,
        },
    });
    let inputs = json!({ "data": data, "schema": file.schema, "terms": file.terms });
    Report::new("deff pilot", &inputs, &result, text)
}

fn samplesize(path: &Path) -> Result<Report> {
    let inputs = read_toml::<DesignInputsFile>(path)?.into_inputs()?;
    let cmp = compare_with_naive(&inputs)?;
    let text = report::sample_size_text(&inputs, &cmp);
    Report::new("samplesize", &inputs, &cmp, text)
}

fn power(path: &Path, n: u64) -> Result<Report> {
    let inputs = read_toml::<DesignInputsFile>(path)?.into_inputs()?;
    let p = PowerInputs::from(&inputs);
    let power = compute_power(n, &p)?;
    let naive = compute_power(
        n,
        &PowerInputs {
            deff: DesignEffectPair::none(),
            ..p
        },
    )?;
    let mut text = report::power_text(n, power, &p);
    text += &format!("power ignoring weights = {naive:.4}\n");
    let result = json!({ "n": n, "power": power, "power_ignoring_weights": naive });
    Report::new("power", &inputs, &result, text)
}

fn config(run: &RunArgs) -> SimulationConfig {
    let mut c = SimulationConfig::new(run.n, run.reps, run.seed);
    c.alpha = run.alpha;
    c.threads = run.threads;
    c
}

fn simulate_generative(path: &Path, run: &RunArgs, superpopulation: usize) -> Result<Report> {
    let spec = read_toml::<ScenarioFile>(path)?.into_spec()?;
    let cfg = config(run).with_superpopulation(superpopulation);
    let r = run_generative_power(&spec, &cfg)?;
    let text = report::simulation_text(&r);
    let inputs = json!({ "scenario": spec, "config": cfg });
    Ok(Report::new("simulate generative", &inputs, &r, text)?.with_seed(run.seed))
}

fn simulate_resample(data: &Path, path: &Path, run: &RunArgs) -> Result<Report> {
    let file: ResampleFile = read_toml(path)?;
    let loaded = read_pilot_csv_with(data, &file.schema, file.missing)?;
    let inputs =
        json!({ "data": data, "config": file, "dropped_rows": loaded.dropped, "run": config(run) });
    let spec = file.into_spec(loaded.data);
    let cfg = config(run);
    let r = run_resample_power(&spec, &cfg)?;
    let text = report::simulation_text(&r);
    Ok(Report::new("simulate resample", &inputs, &r, text)?.with_seed(run.seed))
}

fn weights_gen(
    target: f64,
    n: usize,
    seed: u64,
    tolerance: Option<f64>,
    max_attempts: usize,
    histogram: Option<&Path>,
) -> Result<Report> {
    if let Some(t) = tolerance {
        if t.is_nan() || t <= 0.0 {
            return Err(Error::InvalidInputs(format!(
                "tolerance must be positive, got {t}"
            )));
        }
    }
    let acceptance = tolerance.map(|tolerance| Acceptance {
        tolerance,
        max_attempts,
    });
    let sample = sample_weight_distribution(target, n, seed, acceptance)?;
    let hist = Histogram::new(&sample.values())?;
    let delimited = hist.to_delimited();
    let mut text = report::weights_text(&sample);
    match histogram {
        Some(p) => std::fs::write(p, &delimited)?,
        None => text += &delimited,
    }
    let result = json!({
        "alpha": sample.alpha,
        "population_deff": sample.population_deff,
        "realized_deff": sample.realized_deff,
        "attempts": sample.attempts,
        "histogram": hist,
        "weights": sample.values(),
    });
    let inputs =
        json!({ "deff": target, "n": n, "tolerance": tolerance, "max_attempts": max_attempts });
    Ok(Report::new("weights gen", &inputs, &result, text)?.with_seed(seed))
}
