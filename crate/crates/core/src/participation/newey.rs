use super::probit::{first_stage, probit_mle};
use super::{participation_design, participation_names, Estimator, ModelSpec, ParticipationFit};
use crate::belief::belief_names;
use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{inverse_spd, pseudo_inverse};
use nalgebra::{DMatrix, DVector};

fn append(x: &DMatrix<f64>, col: &[f64]) -> DMatrix<f64> {
    let k = x.ncols();
    let mut out = x.clone().insert_column(k, 0.0);
    out.column_mut(k).copy_from_slice(col);
    out
}

/// Newey's two-step minimum chi-squared (Amemiya GLS) estimator.
///
/// The reduced-form probit of participation on all exogenous variables and
/// the first-stage residual gives `alpha`; the structural coefficients solve
/// `alpha = Pi beta + S gamma` by GLS with the reduced-form covariance
/// corrected for the estimated `Pi`. The estimates are normalized by the
/// reduced-form error variance and are not on the joint-MLE scale.
pub fn fit_newey_minchi2(ds: &Dataset, spec: &ModelSpec) -> Result<ParticipationFit> {
    let extra = spec.extra(ds);
    let a = ds.outcome();
    let n = ds.len();
    let fs = first_stage(ds, &extra)?;
    let kw = fs.w.ncols();
    if n <= kw {
        return Err(Error::RankDeficient(format!("{n} observations for {kw} first-stage parameters")));
    }
    let sigma2_v = fs.rss / (n - kw) as f64;

    let mut rf_names: Vec<String> = belief_names(&extra);
    rf_names.push("v_hat".into());
    let rf = probit_mle(&append(&fs.w, &fs.residuals), &a, &rf_names, &spec.opt)?;
    let alpha = DVector::from_column_slice(&rf.coef[..kw]);
    let lambda = rf.coef[kw];

    let mut cf_names = participation_names(&extra);
    cf_names.push("v_hat".into());
    let x = participation_design(ds, &extra);
    let cf = probit_mle(&append(&x, &fs.residuals), &a, &cf_names, &spec.opt)?;
    let beta_cf = cf.coef[1];

    let omega = rf.covariance.view((0, 0), (kw, kw)).into_owned()
        + &fs.xtx_inv * ((lambda - beta_cf).powi(2) * sigma2_v);
    let mut warnings = extra.merges.clone();
    let omega_inv = match inverse_spd(&omega) {
        Some(m) => m,
        None => {
            let pi = pseudo_inverse(&omega, 1e-10);
            warnings.push(format!("reduced-form weight matrix near-singular: rank {} of {}", pi.rank, pi.dim));
            pi.matrix
        }
    };

    // delta = [alpha_0, beta, gamma...]
    let kd = x.ncols();
    let mut d = DMatrix::zeros(kw, kd);
    d[(0, 0)] = 1.0;
    for i in 0..kw {
        d[(i, 1)] = fs.theta[i];
    }
    for j in 0..extra.len() {
        d[(4 + j, 2 + j)] = 1.0;
    }
    let dt_w = d.transpose() * &omega_inv;
    let covariance = inverse_spd(&(&dt_w * &d)).ok_or_else(|| Error::Singular("minimum-distance weight".into()))?;
    let delta = &covariance * (dt_w * alpha);
    let params: Vec<f64> = delta.iter().copied().collect();
    Ok(ParticipationFit {
        estimator: Estimator::NeweyMinchi2,
        alpha_hat: params[0],
        beta_hat: params[1],
        gamma_hat: params[2..].to_vec(),
        eta_hat: None,
        rho_hat: None,
        sigma_e_hat: Some(sigma2_v.sqrt()),
        params,
        param_names: participation_names(&extra),
        covariance,
        covariance_method: "minimum chi-squared".into(),
        loglik: None,
        n,
        first_stage_theta: Some(fs.theta),
        first_stage_extra: Some(extra.clone()),
        extra,
        warnings,
    })
}
