use crate::estimate::{keys_arg, Keys};
use crate::output::{create_dir, write_json, Metadata};
use crate::InputArgs;
use clap::Args;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use stratpart_core::domain::Factor;
use stratpart_core::inference::{
    beta_mle, binomial_test, exogeneity_test, ks_test, kruskal_wallis, late_battery, two_proportion_test, BetaFit,
    DirectionRule, LateBattery, LateOptions,
};
use stratpart_core::participation::fit_cf_joint_mle;
use stratpart_core::{Dataset, ModelSpec, TestResult};

#[derive(Debug, Clone)]
pub struct Direction(DirectionRule);

fn direction_arg(s: &str) -> Result<Direction, String> {
    match s.trim() {
        "predicted" => Ok(Direction(DirectionRule::Predicted)),
        other => match other.strip_prefix("above:") {
            Some(t) => t
                .parse::<f64>()
                .map(|t| Direction(DirectionRule::Above(t)))
                .map_err(|e| format!("bad threshold `{t}`: {e}")),
            None => Err(format!("unknown direction `{other}` (use `predicted` or `above:<threshold>`)")),
        },
    }
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Seed for the bootstrap critical values of the validity test.
    #[arg(long)]
    seed: u64,
    /// Target treatment probability for the assignment test.
    #[arg(long, default_value_t = 2.0 / 3.0)]
    treat_prob: f64,
    /// Bootstrap draws for the validity test.
    #[arg(long, default_value_t = 999)]
    late_reps: usize,
    /// How belief changes are binarized: `predicted` or `above:<threshold>`.
    #[arg(long, value_parser = direction_arg, default_value = "predicted")]
    direction: Direction,
    /// Fixed effects of the joint model used for the exogeneity test.
    #[arg(long, value_parser = keys_arg, default_value = "location,enroll_date,treat_date")]
    fixed_effects: Keys,
}

#[derive(Debug, Serialize)]
struct Battery {
    assignment: BTreeMap<String, TestResult>,
    balance: BTreeMap<String, TestResult>,
    across_locations: BTreeMap<String, TestResult>,
    participation_by_arm: TestResult,
    prior_belief_fit: BetaFit,
    exogeneity: TestResult,
    instrument_validity: LateBattery,
}

fn split<'a>(ds: &'a Dataset, value: impl Fn(usize) -> f64 + 'a, keep: impl Fn(usize) -> bool) -> (Vec<f64>, Vec<f64>) {
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for (i, r) in ds.records().iter().enumerate() {
        if keep(i) {
            if r.z == 1 {
                treated.push(value(i));
            } else {
                control.push(value(i));
            }
        }
    }
    (treated, control)
}

pub fn run(args: &TestArgs) -> anyhow::Result<ExitCode> {
    let meta = Metadata::start("test");
    let ds = args.input.load()?;
    let recs = ds.records();

    let mut assignment = BTreeMap::new();
    let treated = recs.iter().filter(|r| r.z == 1).count() as u64;
    assignment.insert("overall".to_string(), binomial_test(treated, recs.len() as u64, args.treat_prob)?);
    for loc in ds.levels(Factor::Location) {
        let n = recs.iter().filter(|r| r.location == loc).count() as u64;
        let t = recs.iter().filter(|r| r.location == loc && r.z == 1).count() as u64;
        assignment.insert(format!("location:{loc}"), binomial_test(t, n, args.treat_prob)?);
    }

    let mut balance = BTreeMap::new();
    let cond = ds.condition();
    for (name, value) in [
        ("b_prior", Box::new(|i: usize| recs[i].b_prior) as Box<dyn Fn(usize) -> f64>),
        ("b_ref", Box::new(|i: usize| recs[i].b_ref)),
    ] {
        for (group, keep) in [
            ("all", Box::new(|_: usize| true) as Box<dyn Fn(usize) -> bool>),
            ("below", Box::new(|i: usize| cond[i] == 0)),
            ("above", Box::new(|i: usize| cond[i] == 1)),
        ] {
            let (t, c) = split(&ds, &value, keep);
            if !t.is_empty() && !c.is_empty() {
                balance.insert(format!("ks:{name}:{group}"), ks_test(&t, &c)?);
            }
        }
    }

    let mut across_locations = BTreeMap::new();
    let locations = ds.levels(Factor::Location);
    if locations.len() > 1 {
        for (name, value) in [
            ("b_prior", Box::new(|i: usize| recs[i].b_prior) as Box<dyn Fn(usize) -> f64>),
            ("b_ref", Box::new(|i: usize| recs[i].b_ref)),
            ("delta_b", Box::new(|i: usize| ds.delta_b()[i])),
        ] {
            let groups: Vec<Vec<f64>> = locations
                .iter()
                .map(|l| (0..recs.len()).filter(|&i| &recs[i].location == l).map(&value).collect())
                .collect();
            across_locations.insert(format!("kruskal_wallis:{name}"), kruskal_wallis(&groups)?);
        }
    }

    let count = |z: u8| {
        let arm: Vec<_> = recs.iter().filter(|r| r.z == z).collect();
        (arm.iter().filter(|r| r.a == 1).count() as u64, arm.len() as u64)
    };
    let ((s1, n1), (s0, n0)) = (count(1), count(0));
    let participation_by_arm = two_proportion_test(s1, n1, s0, n0)?;

    let priors: Vec<f64> = recs.iter().map(|r| r.b_prior).collect();
    let prior_belief_fit = beta_mle(&priors)?;

    let model = ModelSpec {
        fixed_effects: args.fixed_effects.0.clone(),
        ..ModelSpec::default()
    };
    let exogeneity = exogeneity_test(&fit_cf_joint_mle(&ds, &model)?)?;
    let instrument_validity = late_battery(
        &ds,
        &LateOptions {
            direction: args.direction.0,
            replications: args.late_reps,
            seed: args.seed,
            ..LateOptions::default()
        },
    )?;

    create_dir(&args.out)?;
    write_json(
        &args.out.join("tests.json"),
        &Battery {
            assignment,
            balance,
            across_locations,
            participation_by_arm,
            prior_belief_fit,
            exogeneity,
            instrument_validity,
        },
    )?;
    meta.write(&args.out, &["tests.json"])?;
    Ok(ExitCode::SUCCESS)
}
