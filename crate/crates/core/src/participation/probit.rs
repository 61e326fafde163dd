use super::{
    check_both_classes, check_rank, participation_design, participation_names, Estimator, ModelSpec,
    ParticipationFit,
};
use crate::belief::{belief_design, belief_names, least_squares, FractionalProbitLikelihood};
use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{inverse_spd, maximize_loglik, Objective, OptOptions, OptStatus};
use nalgebra::{DMatrix, DVector};

/// A binary probit fit with observed-information covariance.
#[derive(Debug, Clone)]
pub struct ProbitMle {
    pub coef: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub loglik: f64,
}

/// Probit MLE of `y` on `x`. Divergence of the coefficients is reported as
/// separation.
pub fn probit_mle(x: &DMatrix<f64>, y: &[u8], names: &[String], opts: &OptOptions) -> Result<ProbitMle> {
    check_both_classes(y)?;
    check_rank(x, names)?;
    let lik = FractionalProbitLikelihood::new(x.clone(), y.iter().map(|&v| v as f64).collect());
    let res = maximize_loglik(&lik, &vec![0.0; x.ncols()], opts)?;
    if res.status == OptStatus::Diverging {
        return Err(Error::Separation(format!(
            "probit coefficients diverge after {} iterations",
            res.iterations
        )));
    }
    let res = res.require_converged("probit")?;
    let covariance = inverse_spd(&(-lik.hessian(&res.argmax)))
        .ok_or_else(|| Error::Singular("probit information".into()))?;
    Ok(ProbitMle {
        coef: res.argmax,
        covariance,
        loglik: res.loglik,
    })
}

fn split(coef: &[f64]) -> (f64, f64, Vec<f64>) {
    (coef[0], coef[1], coef[2..].to_vec())
}

/// Naive probit treating the belief change as exogenous.
pub fn fit_probit(ds: &Dataset, spec: &ModelSpec) -> Result<ParticipationFit> {
    let extra = spec.extra(ds);
    let names = participation_names(&extra);
    let x = participation_design(ds, &extra);
    let m = probit_mle(&x, &ds.outcome(), &names, &spec.opt)?;
    let (alpha_hat, beta_hat, gamma_hat) = split(&m.coef);
    Ok(ParticipationFit {
        estimator: Estimator::Probit,
        alpha_hat,
        beta_hat,
        gamma_hat,
        eta_hat: None,
        rho_hat: None,
        sigma_e_hat: None,
        params: m.coef,
        param_names: names,
        covariance: m.covariance,
        covariance_method: "observed information".into(),
        loglik: Some(m.loglik),
        n: ds.len(),
        warnings: extra.merges.clone(),
        extra,
        first_stage_theta: None,
        first_stage_extra: None,
    })
}

/// First-stage OLS of the belief change on `[1, z, c, z c, extras]`.
pub(crate) struct FirstStage {
    pub w: DMatrix<f64>,
    pub theta: Vec<f64>,
    pub residuals: Vec<f64>,
    pub xtx_inv: DMatrix<f64>,
    pub rss: f64,
}

pub(crate) fn first_stage(ds: &Dataset, extra: &crate::design::ExtraColumns) -> Result<FirstStage> {
    let w = belief_design(ds, extra);
    let y = DVector::from_column_slice(ds.delta_b());
    let ls = least_squares(&w, &y, &belief_names(extra))?;
    Ok(FirstStage {
        theta: ls.coef.iter().copied().collect(),
        residuals: ls.residuals.iter().copied().collect(),
        xtx_inv: ls.xtx_inv,
        rss: ls.rss,
        w,
    })
}

/// Control-function two-step: OLS first-stage residuals enter the probit as
/// an extra regressor. Coefficients are on the scale conditional on the
/// residual, and the covariance ignores first-stage estimation error; use
/// the bootstrap for corrected errors.
pub fn fit_cf_twostep(ds: &Dataset, spec: &ModelSpec) -> Result<ParticipationFit> {
    let extra = spec.extra(ds);
    let fs_extra = spec.first_stage_extra(&extra);
    let fs = first_stage(ds, &fs_extra)?;
    let scale = fs.residuals.iter().map(|e| e.abs()).fold(0.0, f64::max);
    if scale <= 1e-12 * ds.delta_b().iter().map(|d| d.abs()).fold(1e-300, f64::max) {
        return Err(Error::RankDeficient(
            "control residual is identically zero; eta is not identified".into(),
        ));
    }
    let base = participation_design(ds, &extra);
    let k = base.ncols();
    let mut x = base.insert_column(k, 0.0);
    x.column_mut(k).copy_from_slice(&fs.residuals);
    let mut names = participation_names(&extra);
    names.push("eta".into());
    let m = probit_mle(&x, &ds.outcome(), &names, &spec.opt)?;
    let n = ds.len();
    let sigma = (fs.rss / n as f64).sqrt();
    let mut warnings = extra.merges.clone();
    warnings.push("standard errors do not account for the estimated first stage".into());
    Ok(ParticipationFit {
        estimator: Estimator::CfTwostep,
        alpha_hat: m.coef[0],
        beta_hat: m.coef[1],
        gamma_hat: m.coef[2..k].to_vec(),
        eta_hat: Some(m.coef[k]),
        rho_hat: None,
        sigma_e_hat: Some(sigma),
        params: m.coef,
        param_names: names,
        covariance: m.covariance,
        covariance_method: "stage-2 observed information (uncorrected)".into(),
        loglik: Some(m.loglik),
        n,
        extra,
        first_stage_theta: Some(fs.theta),
        first_stage_extra: Some(fs_extra),
        warnings,
    })
}
