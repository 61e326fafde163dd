use crate::output::{create_dir, write_json, Metadata, Reported, BOOTSTRAP, CLUSTER_BOOTSTRAP, STANDARD};
use crate::{parse_cluster_keys, parse_estimators, parse_grid, InputArgs};
use clap::Args;
use nalgebra::DMatrix;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use stratpart_core::belief::{
    ate_by_group_retransformed, fit_beta_regression, fit_fractional_probit, fit_ols_belief, BeliefOptions,
};
use stratpart_core::domain::{DatasetSummary, Factor};
use stratpart_core::inference::{
    bootstrap, bootstrap_participation, exogeneity_test, wald_test, BootstrapResult,
};
use stratpart_core::participation::{ape_table, predictive_margins, twostep_implied_joint};
use stratpart_core::simulator::read_truth;
use stratpart_core::{
    BeliefUpdateFit, BootstrapSpec, Dataset, Estimator, Link, ModelSpec, ParticipationFit, PlantedTruth, TestResult,
};

#[derive(Debug, Clone)]
pub struct Estimators(pub Vec<Estimator>);

#[derive(Debug, Clone)]
pub struct Keys(pub Vec<Factor>);

#[derive(Debug, Clone)]
pub struct Grid(pub Vec<f64>);

pub fn estimators_arg(s: &str) -> Result<Estimators, String> {
    parse_estimators(s).map(Estimators)
}

pub fn keys_arg(s: &str) -> Result<Keys, String> {
    parse_cluster_keys(s).map(Keys)
}

fn grid_arg(s: &str) -> Result<Grid, String> {
    parse_grid(s).map(Grid)
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Comma list of probit, cf_twostep, cf_joint_mle, newey_minchi2, or `all`.
    #[arg(long, value_parser = estimators_arg, default_value = "all")]
    estimators: Estimators,
    /// Bootstrap replications per resampling scheme; 0 disables the bootstrap.
    #[arg(long, default_value_t = 1000)]
    bootstrap_reps: usize,
    /// Cluster-bootstrap strata, or `none` to skip the cluster bootstrap.
    #[arg(long, value_parser = keys_arg, default_value = "location,enroll_date,treat_date")]
    cluster_keys: Keys,
    /// Skip the subject-level bootstrap.
    #[arg(long)]
    no_iid_bootstrap: bool,
    /// Fixed effects in both equations, or `none`.
    #[arg(long, value_parser = keys_arg, default_value = "location,enroll_date,treat_date")]
    fixed_effects: Keys,
    /// Belief-change values for the predictive margins.
    #[arg(long, value_parser = grid_arg, default_value = "-0.4,-0.2,0,0.2,0.4", allow_hyphen_values = true)]
    grid: Grid,
    /// Seed for the bootstrap; required when it runs.
    #[arg(long)]
    seed: Option<u64>,
    /// Planted-truth sidecar from `simulate` for recovery scoring.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Named {
    name: String,
    #[serde(flatten)]
    value: Reported,
}

#[derive(Debug, Serialize)]
struct BootstrapInfo {
    method: &'static str,
    replications: usize,
    completed: usize,
    failed: usize,
    units: usize,
    failures: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Ate {
    below: Reported,
    above: Reported,
}

#[derive(Debug, Serialize)]
struct BeliefBlock {
    link: Link,
    coefficients: Vec<Named>,
    ate: Ate,
    bootstrap: Vec<BootstrapInfo>,
    warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
struct GridRow {
    delta_b: f64,
    #[serde(flatten)]
    value: Reported,
}

#[derive(Debug, Serialize)]
struct Margins {
    overall: Reported,
    at_means: Reported,
    grid: Vec<GridRow>,
}

#[derive(Debug, Serialize)]
struct Apes {
    overall: Reported,
    at_means: Reported,
    at_pre: Reported,
    at_post: Reported,
}

#[derive(Debug, Serialize)]
struct ParticipationBlock {
    covariance_method: String,
    loglik: Option<f64>,
    n: usize,
    coefficients: Vec<Named>,
    #[serde(skip_serializing_if = "Option::is_none")]
    margins: Option<Margins>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ape: Option<Apes>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exogeneity: Option<TestResult>,
    fixed_effect_merges: Vec<String>,
    bootstrap: Vec<BootstrapInfo>,
    warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Recovery {
    quantity: String,
    planted: f64,
    estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    covered_95: Option<bool>,
    note: Option<String>,
}

#[derive(Debug, Serialize)]
struct Settings {
    estimators: Vec<&'static str>,
    bootstrap_reps: usize,
    bootstrap_methods: Vec<&'static str>,
    cluster_keys: Vec<&'static str>,
    fixed_effects: Vec<&'static str>,
    grid: Vec<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct Results {
    n: usize,
    summary: DatasetSummary,
    settings: Settings,
    belief: std::collections::BTreeMap<&'static str, BeliefBlock>,
    participation: std::collections::BTreeMap<&'static str, ParticipationBlock>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    recovery: Vec<Recovery>,
}

/// Resampling schemes to run, labelled as in the result files.
pub fn bootstrap_plans(reps: usize, iid: bool, keys: &[Factor], seed: Option<u64>) -> anyhow::Result<Vec<(&'static str, BootstrapSpec)>> {
    if reps == 0 {
        return Ok(Vec::new());
    }
    let Some(seed) = seed else {
        return Err(stratpart_core::Error::InvalidArgument("--seed is required when --bootstrap-reps > 0".into()).into());
    };
    let mut out = Vec::new();
    let spec = |cluster_keys| BootstrapSpec {
        replications: reps,
        cluster_keys,
        seed,
        drop_failed: true,
    };
    if iid {
        out.push((BOOTSTRAP, spec(None)));
    }
    if !keys.is_empty() {
        out.push((CLUSTER_BOOTSTRAP, spec(Some(keys.to_vec()))));
    }
    Ok(out)
}

fn info(method: &'static str, reps: usize, b: &BootstrapResult) -> BootstrapInfo {
    BootstrapInfo {
        method,
        replications: reps,
        completed: b.completed,
        failed: b.failed,
        units: b.units,
        failures: b.failures.clone(),
    }
}

/// Sample standard deviation of `f` applied to statistic `j` over the
/// completed replications.
fn boot_se(b: &BootstrapResult, j: usize, f: impl Fn(f64) -> f64) -> f64 {
    let v: Vec<f64> = b.replicates.iter().map(|r| f(r[j])).collect();
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn belief_options(fe: &[Factor]) -> BeliefOptions {
    BeliefOptions {
        fixed_effects: fe.to_vec(),
        ..BeliefOptions::default()
    }
}

fn fit_belief(ds: &Dataset, link: Link, opts: &BeliefOptions) -> stratpart_core::Result<BeliefUpdateFit> {
    match link {
        Link::Linear => fit_ols_belief(ds, opts),
        Link::FractionalProbit => fit_fractional_probit(ds, opts),
        Link::BetaProbit => fit_beta_regression(ds, opts),
    }
}

fn belief_statistics(fit: &BeliefUpdateFit) -> Vec<f64> {
    let ate = ate_by_group_retransformed(fit);
    let mut v = fit.theta_hat.clone();
    v.extend([ate.below.estimate, ate.above.estimate]);
    v
}

fn belief_block(ds: &Dataset, link: Link, fe: &[Factor], plans: &[(&'static str, BootstrapSpec)]) -> anyhow::Result<BeliefBlock> {
    let opts = belief_options(fe);
    let fit = fit_belief(ds, link, &opts)?;
    let ate = ate_by_group_retransformed(&fit);
    let k = fit.theta_hat.len();
    let mut coefficients: Vec<Named> = fit
        .param_names
        .iter()
        .enumerate()
        .take(k)
        .map(|(j, name)| Named {
            name: name.clone(),
            value: Reported::standard(stratpart_core::Estimate::new(
                fit.theta_hat[j],
                fit.covariance[(j, j)].max(0.0).sqrt(),
            )),
        })
        .collect();
    if let Some(s) = fit.scale_hat {
        coefficients.push(Named {
            name: "ln_phi".into(),
            value: Reported::standard(stratpart_core::Estimate::new(s, fit.covariance[(k, k)].max(0.0).sqrt())),
        });
    }
    let mut ate = Ate {
        below: Reported::standard(ate.below),
        above: Reported::standard(ate.above),
    };
    let mut boots = Vec::new();
    for (method, spec) in plans {
        let b = bootstrap(ds, spec, |rep| Ok(belief_statistics(&fit_belief(rep, link, &opts)?)))?;
        for (j, c) in coefficients.iter_mut().enumerate().take(k) {
            c.value.se.insert(method, b.se[j]);
        }
        ate.below.se.insert(method, b.se[k]);
        ate.above.se.insert(method, b.se[k + 1]);
        boots.push(info(method, spec.replications, &b));
    }
    Ok(BeliefBlock {
        link,
        coefficients,
        ate,
        bootstrap: boots,
        warnings: fit.warnings,
    })
}

/// Reporting transform for a parameter in internal order.
fn transform(name: &str) -> fn(f64) -> f64 {
    match name {
        "atanh_rho" => f64::tanh,
        "ln_sigma_e" => f64::exp,
        _ => |v| v,
    }
}

/// Wald test that the control-function coefficient is zero.
fn eta_test(fit: &ParticipationFit) -> anyhow::Result<Option<TestResult>> {
    let Some(j) = fit.position("eta") else { return Ok(None) };
    let mut r = DMatrix::zeros(1, fit.params.len());
    r[(0, j)] = 1.0;
    let mut t = wald_test(&fit.params, &fit.covariance, &r, &[0.0])?;
    t.method = "wald: eta = 0 (uncorrected stage-2 covariance)".into();
    Ok(Some(t))
}

fn participation_block(
    ds: &Dataset,
    model: &ModelSpec,
    estimator: Estimator,
    grid: &[f64],
    plans: &[(&'static str, BootstrapSpec)],
) -> anyhow::Result<(ParticipationFit, ParticipationBlock)> {
    let fit = stratpart_core::participation::fit(ds, model, estimator)?;
    let mut coefficients: Vec<Named> = fit
        .coefficients()
        .into_iter()
        .map(|c| Named {
            name: c.name,
            value: Reported::standard(c.value),
        })
        .collect();
    let has_margins = estimator != Estimator::NeweyMinchi2;
    let (mut margins, mut ape) = if has_margins {
        let m = predictive_margins(&fit, ds, grid)?;
        let a = ape_table(&fit, ds)?;
        (
            Some(Margins {
                overall: Reported::standard(m.overall),
                at_means: Reported::standard(m.at_means),
                grid: m
                    .at_grid
                    .iter()
                    .map(|g| GridRow {
                        delta_b: g.delta_b,
                        value: Reported::standard(g.value),
                    })
                    .collect(),
            }),
            Some(Apes {
                overall: Reported::standard(a.overall),
                at_means: Reported::standard(a.at_means),
                at_pre: Reported::standard(a.at_pre),
                at_post: Reported::standard(a.at_post),
            }),
        )
    } else {
        (None, None)
    };
    let exogeneity = match estimator {
        Estimator::CfJointMle => Some(exogeneity_test(&fit)?),
        Estimator::CfTwostep => eta_test(&fit)?,
        _ => None,
    };
    let k = fit.params.len();
    let mut boots = Vec::new();
    for (method, spec) in plans {
        let (_, b) = bootstrap_participation(ds, model, estimator, grid, spec)?;
        for (j, c) in coefficients.iter_mut().enumerate() {
            c.value.se.insert(method, boot_se(&b, j, transform(&fit.param_names[j])));
        }
        if let (Some(m), Some(a)) = (margins.as_mut(), ape.as_mut()) {
            m.overall.se.insert(method, b.se[k]);
            for (g, row) in m.grid.iter_mut().enumerate() {
                row.value.se.insert(method, b.se[k + 1 + g]);
            }
            let base = k + 1 + grid.len();
            for (i, r) in [&mut a.overall, &mut a.at_means, &mut a.at_pre, &mut a.at_post].into_iter().enumerate() {
                r.se.insert(method, b.se[base + i]);
            }
        }
        boots.push(info(method, spec.replications, &b));
    }
    let mut warnings = fit.warnings.clone();
    if !has_margins {
        warnings.push("margins and APEs are not reported for the variance-normalized minimum chi-squared estimates".into());
    }
    let block = ParticipationBlock {
        covariance_method: fit.covariance_method.clone(),
        loglik: fit.loglik,
        n: fit.n,
        coefficients,
        margins,
        ape,
        exogeneity,
        fixed_effect_merges: fit.extra.merges.clone(),
        bootstrap: boots,
        warnings,
    };
    Ok((fit, block))
}

fn write_margins_csv(path: &Path, margins: &Margins) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["delta_b", "estimate", "se_method", "se", "ci_low", "ci_high"])?;
    for row in &margins.grid {
        for (method, se) in &row.value.se {
            let half = 1.959963984540054 * se;
            let e = row.value.estimate;
            w.write_record([
                row.delta_b.to_string(),
                e.to_string(),
                method.to_string(),
                se.to_string(),
                (e - half).to_string(),
                (e + half).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn recovery(truth: &PlantedTruth, fits: &[ParticipationFit], ols: Option<&BeliefBlock>) -> anyhow::Result<Vec<Recovery>> {
    let mut out = Vec::new();
    let scored = |quantity: String, planted: f64, estimate: f64, se: Option<f64>, note: Option<String>| Recovery {
        quantity,
        planted,
        estimate,
        covered_95: se.map(|s| (estimate - planted).abs() <= 1.959963984540054 * s),
        se,
        note,
    };
    if let Some(b) = ols {
        for (j, planted) in truth.theta.iter().enumerate() {
            let c = &b.coefficients[j];
            out.push(scored(format!("ols:{}", c.name), *planted, c.value.estimate, c.value.se.get(STANDARD).copied(), None));
        }
    }
    for fit in fits {
        let name = fit.estimator.name();
        match fit.estimator {
            Estimator::CfJointMle => {
                let coef = fit.coefficients();
                let get = |n: &str| coef.iter().find(|c| c.name == n).map(|c| c.value);
                out.push(scored(format!("{name}:beta"), truth.beta, fit.beta_hat, Some(fit.beta().se), None));
                if let Some(r) = get("rho") {
                    out.push(scored(format!("{name}:rho"), truth.rho, r.estimate, Some(r.se), None));
                }
                if let Some(s) = get("sigma_e") {
                    out.push(scored(format!("{name}:sigma_e"), truth.sigma_e, s.estimate, Some(s.se), None));
                }
            }
            Estimator::Probit => out.push(scored(
                format!("{name}:beta"),
                truth.beta,
                fit.beta_hat,
                Some(fit.beta().se),
                Some("ignores endogeneity of the belief change".into()),
            )),
            Estimator::CfTwostep => {
                let implied = twostep_implied_joint(fit)?;
                out.push(scored(
                    format!("{name}:beta"),
                    truth.beta,
                    implied[1],
                    None,
                    Some("structural slope implied by the two-step fit; see bootstrap for its error".into()),
                ));
            }
            Estimator::NeweyMinchi2 => out.push(scored(
                format!("{name}:beta"),
                truth.beta,
                fit.beta_hat,
                None,
                Some("normalized by the reduced-form error variance; not on the structural scale".into()),
            )),
        }
    }
    Ok(out)
}

pub fn run(args: &EstimateArgs) -> anyhow::Result<ExitCode> {
    let meta = Metadata::start("estimate");
    let ds = args.input.load()?;
    let truth = args.truth.as_deref().map(read_truth).transpose()?;
    let plans = bootstrap_plans(args.bootstrap_reps, !args.no_iid_bootstrap, &args.cluster_keys.0, args.seed)?;
    let fe = &args.fixed_effects.0;
    let model = ModelSpec {
        fixed_effects: fe.clone(),
        ..ModelSpec::default()
    };
    create_dir(&args.out)?;

    let mut belief = std::collections::BTreeMap::new();
    for (label, link) in [("ols", Link::Linear), ("fractional_probit", Link::FractionalProbit), ("beta", Link::BetaProbit)] {
        belief.insert(label, belief_block(&ds, link, fe, &plans)?);
    }
    let mut participation = std::collections::BTreeMap::new();
    let mut fits = Vec::new();
    let mut files = vec!["results.json".to_string()];
    for &est in &args.estimators.0 {
        let (fit, block) = participation_block(&ds, &model, est, &args.grid.0, &plans)?;
        if let Some(m) = &block.margins {
            let file = format!("margins_{}.csv", est.name());
            write_margins_csv(&args.out.join(&file), m)?;
            files.push(file);
        }
        participation.insert(est.name(), block);
        fits.push(fit);
    }
    let recovery = match &truth {
        Some(t) => recovery(t, &fits, belief.get("ols"))?,
        None => Vec::new(),
    };
    let results = Results {
        n: ds.len(),
        summary: ds.summary(),
        settings: Settings {
            estimators: args.estimators.0.iter().map(|e| e.name()).collect(),
            bootstrap_reps: args.bootstrap_reps,
            bootstrap_methods: plans.iter().map(|p| p.0).collect(),
            cluster_keys: args.cluster_keys.0.iter().map(|f| f.name()).collect(),
            fixed_effects: fe.iter().map(|f| f.name()).collect(),
            grid: args.grid.0.clone(),
            seed: args.seed,
        },
        belief,
        participation,
        recovery,
    };
    write_json(&args.out.join("results.json"), &results)?;
    let refs: Vec<&str> = files.iter().map(|s| s.as_str()).collect();
    meta.write(&args.out, &refs)?;
    Ok(ExitCode::SUCCESS)
}
