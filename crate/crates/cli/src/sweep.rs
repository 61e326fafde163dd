use crate::estimate::{estimators_arg, Estimators};
use crate::output::{create_dir, write_json, Metadata};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;
use stratpart_core::inference::exogeneity_test;
use stratpart_core::participation::{fit, twostep_implied_joint};
use stratpart_core::simulator::{generate_population, preset};
use stratpart_core::{Estimator, ModelSpec};

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value = "paper2019")]
    preset: String,
    #[arg(long, default_value_t = 1510)]
    n: usize,
    /// First seed; the sweep uses `seed .. seed + seeds`.
    #[arg(long)]
    seed: u64,
    /// Number of seeds.
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    #[arg(long, value_parser = estimators_arg, default_value = "probit,cf_joint_mle")]
    estimators: Estimators,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// One estimator on one seed.
#[derive(Debug, Clone, Serialize)]
struct Run {
    seed: u64,
    estimator: &'static str,
    beta: Option<f64>,
    se: Option<f64>,
    covered_95: Option<bool>,
    exogeneity_p: Option<f64>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct Summary {
    estimator: &'static str,
    /// Scale of `beta` relative to the planted structural slope.
    scale: &'static str,
    planted_beta: f64,
    completed: usize,
    failed: usize,
    mean_beta: Option<f64>,
    bias: Option<f64>,
    rmse: Option<f64>,
    coverage_95: Option<f64>,
    exogeneity_rejection_5pct: Option<f64>,
}

fn scale(e: Estimator) -> &'static str {
    match e {
        Estimator::Probit | Estimator::CfJointMle => "structural",
        Estimator::CfTwostep => "structural (implied by the two-step fit, no standard error)",
        Estimator::NeweyMinchi2 => "reduced-form normalized",
    }
}

fn one(seed: u64, e: Estimator, args: &SweepArgs, planted: f64) -> Run {
    let mut run = Run {
        seed,
        estimator: e.name(),
        beta: None,
        se: None,
        covered_95: None,
        exogeneity_p: None,
        error: None,
    };
    let outcome = (|| -> stratpart_core::Result<()> {
        let pop = generate_population(&preset(&args.preset, args.n, seed)?)?;
        let f = fit(&pop.dataset, &ModelSpec::default(), e)?;
        match e {
            Estimator::CfTwostep => run.beta = Some(twostep_implied_joint(&f)?[1]),
            Estimator::NeweyMinchi2 => run.beta = Some(f.beta_hat),
            _ => {
                let b = f.beta();
                run.beta = Some(b.estimate);
                run.se = Some(b.se);
                run.covered_95 = Some((b.estimate - planted).abs() <= 1.959963984540054 * b.se);
            }
        }
        if e == Estimator::CfJointMle {
            run.exogeneity_p = Some(exogeneity_test(&f)?.p_value);
        }
        Ok(())
    })();
    if let Err(err) = outcome {
        run.error = Some(err.to_string());
    }
    run
}

fn summarize(e: Estimator, runs: &[Run], planted: f64) -> Summary {
    let mine: Vec<&Run> = runs.iter().filter(|r| r.estimator == e.name()).collect();
    let betas: Vec<f64> = mine.iter().filter_map(|r| r.beta).collect();
    let n = betas.len() as f64;
    let mean = (n > 0.0).then(|| betas.iter().sum::<f64>() / n);
    let rate = |flags: Vec<bool>| (!flags.is_empty()).then(|| flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64);
    let comparable = scale(e).starts_with("structural");
    Summary {
        estimator: e.name(),
        scale: scale(e),
        planted_beta: planted,
        completed: betas.len(),
        failed: mine.len() - betas.len(),
        mean_beta: mean,
        bias: mean.filter(|_| comparable).map(|m| m - planted),
        rmse: (comparable && n > 0.0).then(|| (betas.iter().map(|b| (b - planted).powi(2)).sum::<f64>() / n).sqrt()),
        coverage_95: rate(mine.iter().filter_map(|r| r.covered_95).collect()),
        exogeneity_rejection_5pct: rate(mine.iter().filter_map(|r| r.exogeneity_p.map(|p| p < 0.05)).collect()),
    }
}

pub fn run(args: &SweepArgs) -> anyhow::Result<ExitCode> {
    let meta = Metadata::start("sweep");
    let planted = preset(&args.preset, args.n, args.seed)?.truth.beta;
    let jobs: Vec<(u64, Estimator)> = (args.seed..args.seed + args.seeds)
        .flat_map(|s| args.estimators.0.iter().map(move |&e| (s, e)))
        .collect();
    let runs: Vec<Run> = jobs.par_iter().map(|&(s, e)| one(s, e, args, planted)).collect();
    let summary: Vec<Summary> = args.estimators.0.iter().map(|&e| summarize(e, &runs, planted)).collect();

    create_dir(&args.out)?;
    write_json(
        &args.out.join("sweep.json"),
        &serde_json::json!({
            "preset": args.preset,
            "n": args.n,
            "seeds": [args.seed, args.seed + args.seeds],
            "summary": summary,
        }),
    )?;
    let mut w = csv::Writer::from_path(args.out.join("sweep_runs.csv"))?;
    for r in &runs {
        w.serialize(r)?;
    }
    w.flush()?;
    meta.write(&args.out, &["sweep.json", "sweep_runs.csv"])?;
    Ok(ExitCode::SUCCESS)
}
