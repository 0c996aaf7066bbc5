//! Acceptance report: one PASS/FAIL/SKIP line per criterion, followed by the
//! individual checks. Exits 0 unless `IPW_ACCEPTANCE_STRICT=1` is set and a
//! criterion failed.
//!
//! The NHEFS checks read the file named by `IPW_NHEFS_CSV`; without it they
//! are reported as skipped.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use ipw_design::deff::{arm_moments, closed_form_pair, kish_deff, pilot_pair};
use ipw_design::design::{
    adjusted_variances, compare_with_naive, compute_power, raw_sample_size, PowerInputs,
};
use ipw_design::estimation::{
    analyze, fit_propensity, hajek_means, iptw_weights, wls_msm, DesignSpec, ModelTerms,
    StackedSystem,
};
use ipw_design::io::{read_pilot_csv_with, read_toml, ResampleFile, TermsFile};
use ipw_design::simulation::{
    run_generative_power, run_resample_power, ResampleSpec, ShiftRule, SimulationConfig,
};
use ipw_design::{
    presets, Arm, Cell, CellOutcome, DeffMethod, DesignEffectPair, DesignInputs, JointDistribution,
    OutcomeLaw, SimulationReport, WeightTreatment,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

const SEED: u64 = 20240521;
const REPS: usize = 2000;

struct Criterion {
    id: &'static str,
    title: &'static str,
    checks: Vec<(bool, String)>,
    skipped: Vec<String>,
}

impl Criterion {
    fn new(id: &'static str, title: &'static str) -> Self {
        Criterion {
            id,
            title,
            checks: Vec::new(),
            skipped: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: impl Into<String>) {
        self.checks.push((ok, detail.into()));
    }

    fn skip(&mut self, detail: impl Into<String>) {
        self.skipped.push(detail.into());
    }

    fn failed(&self) -> bool {
        self.checks.iter().any(|(ok, _)| !ok)
    }

    fn status(&self) -> &'static str {
        if self.failed() {
            "FAIL"
        } else if !self.skipped.is_empty() {
            "SKIP"
        } else {
            "PASS"
        }
    }

    fn print(&self) {
        println!("{} criterion {}: {}", self.status(), self.id, self.title);
        for (ok, d) in &self.checks {
            println!("      {} {d}", if *ok { "ok  " } else { "FAIL" });
        }
        for d in &self.skipped {
            println!("      skip {d}");
        }
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol + 1e-12
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn round_to(x: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (x * s).round() / s
}

struct Reference {
    deff: [f64; 2],
    adjusted: [f64; 2],
    adjusted_digits: i32,
    n_deff: u64,
    n_rct: u64,
    power_deff: f64,
    power_rct: f64,
    er: [f64; 2],
}

const REFERENCE: [Reference; 4] = [
    Reference {
        deff: [1.12, 1.04],
        adjusted: [0.2208, 0.2533],
        adjusted_digits: 4,
        n_deff: 356,
        n_rct: 327,
        power_deff: 0.81,
        power_rct: 0.76,
        er: [0.08, -0.01],
    },
    Reference {
        deff: [2.78, 2.78],
        adjusted: [0.5208, 0.6667],
        adjusted_digits: 4,
        n_deff: 828,
        n_rct: 298,
        power_deff: 0.80,
        power_rct: 0.42,
        er: [0.60, -0.19],
    },
    Reference {
        deff: [1.12, 1.04],
        adjusted: [188.2, 291.2],
        adjusted_digits: 1,
        n_deff: 310,
        n_rct: 286,
        power_deff: 0.85,
        power_rct: 0.81,
        er: [-0.02, 0.01],
    },
    Reference {
        deff: [2.78, 2.78],
        adjusted: [469.4, 780.6],
        adjusted_digits: 1,
        n_deff: 784,
        n_rct: 283,
        power_deff: 0.86,
        power_rct: 0.47,
        er: [0.00, -0.01],
    },
];

fn criterion1() -> Criterion {
    let mut c = Criterion::new(
        "1",
        "closed-form design effects, adjusted variances and sample sizes, scenarios 1-4",
    );
    for (i, r) in REFERENCE.iter().enumerate() {
        let spec = presets::scenario(i + 1).unwrap();
        let inputs = presets::design_inputs(&spec);
        let d = inputs.deff;
        c.check(
            round2(d.deff0) == r.deff[0] && round2(d.deff1) == r.deff[1],
            format!(
                "scenario {}: deff {:.2}/{:.2} (expected {:.2}/{:.2})",
                i + 1,
                d.deff0,
                d.deff1,
                r.deff[0],
                r.deff[1]
            ),
        );
        let adj = adjusted_variances(inputs.sigma0sq, inputs.sigma1sq, &d);
        let got = [
            round_to(adj.sigma0adj, r.adjusted_digits),
            round_to(adj.sigma1adj, r.adjusted_digits),
        ];
        c.check(
            within(got[0], r.adjusted[0], 1e-9) && within(got[1], r.adjusted[1], 1e-9),
            format!(
                "scenario {}: adjusted variances {} / {} (expected {} / {})",
                i + 1,
                got[0],
                got[1],
                r.adjusted[0],
                r.adjusted[1]
            ),
        );
        let cmp = compare_with_naive(&inputs).unwrap();
        c.check(
            cmp.with_deff.n_total.abs_diff(r.n_deff) <= 1
                && cmp.naive.n_total.abs_diff(r.n_rct) <= 1,
            format!(
                "scenario {}: n_deff {} (expected {} +/- 1), n_rct {} (expected {} +/- 1)",
                i + 1,
                cmp.with_deff.n_total,
                r.n_deff,
                cmp.naive.n_total,
                r.n_rct
            ),
        );
    }
    c
}

fn criterion2() -> Criterion {
    let mut c = Criterion::new("2", "derived constants of scenario 1");
    let s = presets::scenario1();
    let p_y1 = s.marginal_mean(Arm::Treated);
    let var1 = s.marginal_variance(Arm::Treated);
    let p_a = s.joint.arm_probability(Arm::Treated);
    let k = s.joint.treatment_odds();
    c.check(within(p_y1, 0.58, 1e-12), format!("P(Y1 = 1) = {p_y1}"));
    c.check(within(var1, 0.2436, 1e-12), format!("sigma1^2 = {var1}"));
    c.check(within(p_a, 0.65, 1e-12), format!("P(A = 1) = {p_a}"));
    c.check(within(k, 1.857, 5e-4), format!("k = {k:.6}"));
    c
}

fn simulate(spec_no: usize, n: u64) -> SimulationReport {
    let spec = presets::scenario(spec_no).unwrap();
    run_generative_power(&spec, &SimulationConfig::new(n as usize, REPS, SEED)).unwrap()
}

fn criterion3(s1_at_n_deff: &mut Option<SimulationReport>) -> Criterion {
    let mut c = Criterion::new(
        "3",
        "Monte Carlo power and mean remainders, scenarios 1-4 (R = 2000)",
    );
    for (i, r) in REFERENCE.iter().enumerate() {
        let t = Instant::now();
        let at_deff = simulate(i + 1, r.n_deff);
        let at_rct = simulate(i + 1, r.n_rct);
        c.check(
            within(at_deff.empirical_power, r.power_deff, 0.025),
            format!(
                "scenario {}: power at n = {} is {:.4} (expected {:.2} +/- 0.025, MC s.e. {:.4})",
                i + 1,
                r.n_deff,
                at_deff.empirical_power,
                r.power_deff,
                at_deff.mc_stderr
            ),
        );
        c.check(
            within(at_rct.empirical_power, r.power_rct, 0.03),
            format!(
                "scenario {}: power at n = {} is {:.4} (expected {:.2} +/- 0.03)",
                i + 1,
                r.n_rct,
                at_rct.empirical_power,
                r.power_rct
            ),
        );
        c.check(
            within(at_deff.mean_er0, r.er[0], 0.05) && within(at_deff.mean_er1, r.er[1], 0.05),
            format!(
                "scenario {}: mean Er {:.3} / {:.3} (expected {:.2} / {:.2} +/- 0.05) [{:.1?}]",
                i + 1,
                at_deff.mean_er0,
                at_deff.mean_er1,
                r.er[0],
                r.er[1],
                t.elapsed()
            ),
        );
        if i == 0 {
            *s1_at_n_deff = Some(at_deff);
        }
    }
    c
}

fn criterion4() -> Criterion {
    let mut c = Criterion::new(
        "4",
        "NHEFS pilot design effects, sample sizes and resampling power",
    );
    let inputs = presets::nhefs_design_inputs();
    let cmp = compare_with_naive(&inputs).unwrap();
    c.check(
        cmp.with_deff.n_total.abs_diff(853) <= 1 && cmp.naive.n_total.abs_diff(713) <= 1,
        format!(
            "from stated inputs: n_deff {} (expected 853 +/- 1), n_rct {} (expected 713 +/- 1)",
            cmp.with_deff.n_total, cmp.naive.n_total
        ),
    );
    let Some(path) = std::env::var_os("IPW_NHEFS_CSV") else {
        c.skip("pilot design effects: IPW_NHEFS_CSV not set");
        c.skip("resampling power at n = 853 and 713: IPW_NHEFS_CSV not set");
        return c;
    };
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let terms: TermsFile = read_toml(configs.join("nhefs_terms.toml")).unwrap();
    let loaded = read_pilot_csv_with(&path, &terms.schema, terms.missing).unwrap();
    c.check(
        loaded.data.len() == 1566,
        format!("{} complete rows (expected 1566)", loaded.data.len()),
    );
    let fit = fit_propensity(&loaded.data, &terms.terms).unwrap();
    let w = iptw_weights(&fit, &loaded.data).unwrap();
    let pair = pilot_pair(&loaded.data, &w).unwrap();
    c.check(
        round2(pair.deff0) == 1.03 && round2(pair.deff1) == 1.24,
        format!(
            "pilot deff {:.4}/{:.4} (expected 1.03/1.24)",
            pair.deff0, pair.deff1
        ),
    );
    let file: ResampleFile = read_toml(configs.join("nhefs_resample.toml")).unwrap();
    let spec = file.into_spec(loaded.data);
    for (n, target) in [(853usize, 0.82), (713, 0.76)] {
        let r = run_resample_power(&spec, &SimulationConfig::new(n, REPS, SEED)).unwrap();
        c.check(
            within(r.empirical_power, target, 0.025),
            format!(
                "resampling power at n = {n}: {:.4} (expected {target} +/- 0.025)",
                r.empirical_power
            ),
        );
        if n == 853 {
            c.check(
                within(r.mean_er0, 0.02, 0.05) && within(r.mean_er1, -0.03, 0.05),
                format!(
                    "mean Er {:.3} / {:.3} (expected 0.02 / -0.03 +/- 0.05)",
                    r.mean_er0, r.mean_er1
                ),
            );
        }
    }
    c
}

fn random_joint() -> impl Strategy<Value = JointDistribution> {
    prop::collection::vec((0.01f64..1.0, 0.01f64..0.99), 1..8).prop_map(|cells| {
        let total: f64 = cells.iter().map(|c| c.0).sum();
        let cells = cells
            .iter()
            .enumerate()
            .map(|(i, &(m, p))| Cell {
                label: format!("c{i}"),
                p_l: m / total,
                p_a1_given_l: p,
            })
            .collect();
        JointDistribution { cells }
    })
}

fn random_law() -> impl Strategy<Value = OutcomeLaw> {
    prop_oneof![
        (0.01f64..0.99).prop_map(|p| OutcomeLaw::Bernoulli { p }),
        (-5.0f64..5.0, 0.1f64..10.0)
            .prop_map(|(mean, variance)| OutcomeLaw::Normal { mean, variance }),
    ]
}

fn random_inputs() -> impl Strategy<Value = DesignInputs> {
    (
        0.01f64..0.2,
        0.5f64..0.95,
        0.05f64..5.0,
        0.2f64..5.0,
        0.1f64..10.0,
        0.1f64..10.0,
        1.0f64..4.0,
        1.0f64..4.0,
    )
        .prop_map(|(alpha, power, delta, k, s0, s1, d0, d1)| DesignInputs {
            alpha,
            power,
            delta,
            k,
            sigma0sq: s0,
            sigma1sq: s1,
            deff: DesignEffectPair::new(d0, d1, DeffMethod::Assumed).unwrap(),
        })
}

fn property(
    c: &mut Criterion,
    name: &str,
    cases: u32,
    f: impl FnOnce(&mut TestRunner) -> Result<(), String>,
) {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    match f(&mut runner) {
        Ok(()) => c.check(true, format!("{name} ({cases} cases)")),
        Err(e) => c.check(false, format!("{name}: {e}")),
    }
}

fn criterion5(s1: Option<&SimulationReport>) -> Criterion {
    let mut c = Criterion::new("5", "property suites");

    property(&mut c, "Kish deff >= 1", 10_000, |r| {
        r.run(&prop::collection::vec(0.01f64..100.0, 1..60), |w| {
            prop_assert!(kish_deff(w.iter().copied()).unwrap() >= 1.0);
            Ok(())
        })
        .map_err(|e| e.to_string())
    });
    property(&mut c, "closed-form deff >= 1", 10_000, |r| {
        r.run(&random_joint(), |j| {
            let p = closed_form_pair(&j).unwrap();
            prop_assert!(p.deff0 >= 1.0 && p.deff1 >= 1.0);
            Ok(())
        })
        .map_err(|e| e.to_string())
    });
    property(&mut c, "|remainder| <= Cauchy-Schwarz bound", 10_000, |r| {
        let strat = random_joint().prop_flat_map(|j| {
            let n = j.len();
            (
                Just(j),
                prop::collection::vec((random_law(), random_law()), n),
            )
        });
        r.run(&strat, |(j, laws)| {
            let outcomes: Vec<CellOutcome> = laws
                .into_iter()
                .map(|(y0, y1)| CellOutcome { y0, y1 })
                .collect();
            for arm in Arm::BOTH {
                let m = arm_moments(&j, &outcomes, arm).unwrap();
                prop_assert!(m.remainder().abs() <= m.bound() * (1.0 + 1e-9) + 1e-12);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
    });
    property(
        &mut c,
        "sample size monotone in delta, sigma^2, power and alpha",
        2_000,
        |r| {
            r.run(&random_inputs(), |d| {
                let n = raw_sample_size(&d).unwrap();
                let n_delta = raw_sample_size(&DesignInputs {
                    delta: d.delta * 1.1,
                    ..d
                })
                .unwrap();
                let n_s0 = raw_sample_size(&DesignInputs {
                    sigma0sq: d.sigma0sq * 1.1,
                    ..d
                })
                .unwrap();
                let n_s1 = raw_sample_size(&DesignInputs {
                    sigma1sq: d.sigma1sq * 1.1,
                    ..d
                })
                .unwrap();
                let n_pow = raw_sample_size(&DesignInputs {
                    power: d.power + 0.02,
                    ..d
                })
                .unwrap();
                let n_alpha = raw_sample_size(&DesignInputs {
                    alpha: d.alpha * 0.9,
                    ..d
                })
                .unwrap();
                prop_assert!(n_delta < n && n_s0 > n && n_s1 > n && n_pow > n && n_alpha > n);
                Ok(())
            })
            .map_err(|e| e.to_string())
        },
    );
    property(&mut c, "power(delta) = power(-delta)", 2_000, |r| {
        r.run(&(random_inputs(), 2u64..5000), |(d, n)| {
            let p = PowerInputs::from(&d);
            let a = compute_power(n, &p).unwrap();
            let b = compute_power(
                n,
                &PowerInputs {
                    delta: -p.delta,
                    ..p
                },
            )
            .unwrap();
            prop_assert!((a - b).abs() <= 1e-15);
            Ok(())
        })
        .map_err(|e| e.to_string())
    });

    let mut scale_exact = true;
    let mut scale_close = true;
    let mut wls_gap: f64 = 0.0;
    let mut est_le_known = 0;
    let mut jac_gap: f64 = 0.0;
    let terms = ModelTerms::all_main_effects();
    for seed in 0..100u64 {
        let data = common::small_dataset(300, seed);
        let fit = fit_propensity(&data, &terms).unwrap();
        let w = iptw_weights(&fit, &data).unwrap();
        let h = hajek_means(&data, &w).unwrap();
        scale_exact &= hajek_means(&data, &w.scaled(8.0)).unwrap() == h;
        let h3 = hajek_means(&data, &w.scaled(3.7)).unwrap();
        scale_close &= (h3.ace_hat - h.ace_hat).abs() <= 1e-12 * h.ace_hat.abs().max(1.0);
        let (_, b1) = wls_msm(&data, &w).unwrap();
        wls_gap = wls_gap.max((b1 - h.ace_hat).abs());
        let a = analyze(&data, &terms, WeightTreatment::Estimated).unwrap();
        if a.var_ace_estimated <= a.var_ace_known * (1.0 + 1e-12) {
            est_le_known += 1;
        }
        if seed < 20 {
            let spec = DesignSpec::resolve(&terms, &data).unwrap();
            let sys = StackedSystem::from_data(&data, &spec).unwrap();
            let theta = sys.solve().unwrap();
            let an = sys.bread(&theta);
            let fd = sys.bread_numeric(&theta);
            jac_gap = jac_gap.max((&an - &fd).amax() / an.amax());
        }
    }
    let cohort = common::synthetic_cohort(1566, 0.0, 4);
    let rich = ModelTerms {
        main: None,
        quadratic: vec!["age".into(), "weight".into()],
        categorical: vec!["activity".into()],
    };
    let spec = DesignSpec::resolve(&rich, &cohort).unwrap();
    let sys = StackedSystem::from_data(&cohort, &spec).unwrap();
    let theta = sys.solve().unwrap();
    let an = sys.bread(&theta);
    jac_gap = jac_gap.max((&an - &sys.bread_numeric(&theta)).amax() / an.amax());

    c.check(scale_exact && scale_close, "Hajek estimates invariant to weight scale (exact for powers of two, 1e-12 otherwise), 100 datasets");
    c.check(
        wls_gap <= 1e-12,
        format!("WLS slope equals Hajek difference, max gap {wls_gap:.2e}"),
    );
    c.check(
        est_le_known == 100,
        format!(
            "estimated-weights sandwich <= known-weights sandwich in {est_le_known}/100 datasets"
        ),
    );
    c.check(
        jac_gap <= 1e-6,
        format!("analytic vs finite-difference Jacobian, max relative gap {jac_gap:.2e}"),
    );

    match s1 {
        Some(r) => {
            let ratio = r.mean_sandwich_var / r.empirical_var;
            c.check(
                (ratio - 1.0).abs() <= 0.10,
                format!(
                    "scenario 1, n = 356: mean sandwich var {:.6} vs replication var {:.6} (ratio {ratio:.3})",
                    r.mean_sandwich_var, r.empirical_var
                ),
            );
        }
        None => c.check(false, "scenario 1 simulation missing"),
    }

    let spec2 = presets::scenario2();
    let cfg = SimulationConfig::new(298, 200, 77).with_superpopulation(200_000);
    let reports: Vec<_> = [1usize, 3, 8]
        .iter()
        .map(|&t| run_generative_power(&spec2, &cfg.clone().with_threads(t)).unwrap())
        .collect();
    let resample = ResampleSpec {
        name: "cohort".into(),
        base_data: common::synthetic_cohort(800, 2.0, 5),
        propensity_terms: ModelTerms::all_main_effects(),
        outcome_terms: ModelTerms::all_main_effects(),
        target_ace: 1.0,
        shift_rule: ShiftRule::PopulationMean,
        sigma0sq: None,
        sigma1sq: None,
    };
    let rcfg = SimulationConfig::new(400, 100, 78);
    let r1 = run_resample_power(&resample, &rcfg.clone().with_threads(1)).unwrap();
    let r8 = run_resample_power(&resample, &rcfg.clone().with_threads(8)).unwrap();
    c.check(
        reports.windows(2).all(|w| w[0] == w[1]) && r1 == r8,
        "simulation reports bit-identical with 1, 3 and 8 threads",
    );
    c
}

fn criterion6() -> Criterion {
    let mut c = Criterion::new(
        "6",
        "null calibration: rejection rate within 0.012 of alpha = 0.05 (R = 2000)",
    );
    let null = presets::null_version(&presets::scenario1());
    let g = run_generative_power(&null, &SimulationConfig::new(356, REPS, SEED)).unwrap();
    c.check(
        within(g.empirical_power, 0.05, 0.012),
        format!(
            "generative, scenario-1 confounding, n = 356: {:.4}",
            g.empirical_power
        ),
    );
    let spec = ResampleSpec {
        name: "cohort-null".into(),
        base_data: common::synthetic_cohort(1566, 2.0, 11),
        propensity_terms: ModelTerms {
            main: None,
            quadratic: vec!["age".into(), "weight".into()],
            categorical: vec!["activity".into()],
        },
        outcome_terms: ModelTerms::all_main_effects(),
        target_ace: 0.0,
        shift_rule: ShiftRule::PopulationMean,
        sigma0sq: None,
        sigma1sq: None,
    };
    let r = run_resample_power(&spec, &SimulationConfig::new(853, REPS, SEED)).unwrap();
    c.check(
        within(r.empirical_power, 0.05, 0.012),
        format!(
            "resampling, synthetic cohort of 1566, n = 853: {:.4}",
            r.empirical_power
        ),
    );
    c
}

fn main() {
    let start = Instant::now();
    let mut s1 = None;
    let criteria = [
        criterion1(),
        criterion2(),
        criterion3(&mut s1),
        criterion4(),
        criterion5(s1.as_ref()),
        criterion6(),
    ];
    println!();
    for c in &criteria {
        c.print();
    }
    let failed = criteria.iter().filter(|c| c.failed()).count();
    let skipped = criteria.iter().filter(|c| c.status() == "SKIP").count();
    println!(
        "\nacceptance: {} passed, {failed} failed, {skipped} skipped in {:.1?}",
        criteria.len() - failed - skipped,
        start.elapsed()
    );
    if failed > 0 && std::env::var("IPW_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
