#![allow(dead_code)]

use ipw_design::estimation::expit;
use ipw_design::{Arm, PilotDataset, PilotRow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Cohort with NHEFS-like covariate types: two binary, one 3-level factor and
/// two continuous covariates; continuous outcome with treatment effect `effect`.
pub fn synthetic_cohort(n: usize, effect: f64, seed: u64) -> PilotDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let rows = (0..n)
        .map(|_| {
            let sex = (rng.random::<f64>() < 0.5) as u8 as f64;
            let race = (rng.random::<f64>() < 0.15) as u8 as f64;
            let activity = rng.random_range(0..3) as f64;
            let age = 25.0 + 40.0 * rng.random::<f64>();
            let weight = 70.0 + 12.0 * z.sample(&mut rng);
            let lp = -1.3 + 0.35 * sex - 0.5 * race
                + 0.2 * activity
                + 0.03 * (age - 45.0)
                + 0.01 * (weight - 70.0);
            let treated = rng.random::<f64>() < expit(lp);
            let y = 2.0 + 0.8 * sex - 0.05 * (age - 45.0) - 0.04 * (weight - 70.0)
                + 0.5 * activity
                + if treated { effect } else { 0.0 }
                + 7.5 * z.sample(&mut rng);
            PilotRow {
                a: Arm::from_bool(treated),
                x: vec![sex, race, activity, age, weight],
                y: Some(y),
            }
        })
        .collect();
    PilotDataset {
        covariate_names: ["sex", "race", "activity", "age", "weight"]
            .map(String::from)
            .to_vec(),
        rows,
    }
}

/// Small dataset with one continuous and one binary confounder.
pub fn small_dataset(n: usize, seed: u64) -> PilotDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let rows = (0..n)
        .map(|_| {
            let x1: f64 = z.sample(&mut rng);
            let x2 = (rng.random::<f64>() < 0.5) as u8 as f64;
            let treated = rng.random::<f64>() < expit(-0.2 + 0.9 * x1 + 0.6 * x2);
            let y = 1.0 + x1 + 0.5 * x2 + if treated { 0.7 } else { 0.0 } + z.sample(&mut rng);
            PilotRow {
                a: Arm::from_bool(treated),
                x: vec![x1, x2],
                y: Some(y),
            }
        })
        .collect();
    PilotDataset {
        covariate_names: vec!["x1".into(), "x2".into()],
        rows,
    }
}
