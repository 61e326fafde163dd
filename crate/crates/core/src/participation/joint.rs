use super::probit::{first_stage, probit_mle};
use super::{check_both_classes, check_rank, participation_design, participation_names, Estimator, ModelSpec, ParticipationFit};
use crate::belief::{belief_design, belief_names};
use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{inverse_mills, inverse_spd, log_std_normal_cdf, maximize_loglik, Objective, OptStatus};
use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Joint log-likelihood of the belief equation `delta_b = w theta + e` and
/// the participation equation `a = 1{x b + u > 0}` with `(e, u)` bivariate
/// normal, `sd(u) = 1`, `corr(e, u) = rho`.
///
/// Parameters are `[b, theta, ln sigma_e, atanh rho]`, where `x` includes
/// the constant and the belief change.
#[derive(Debug, Clone)]
pub struct JointCfLikelihood {
    pub x: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub delta_b: Vec<f64>,
    pub a: Vec<u8>,
}

struct Obs {
    e: f64,
    m: f64,
    lambda: f64,
    ll: f64,
}

impl JointCfLikelihood {
    pub fn new(x: DMatrix<f64>, w: DMatrix<f64>, delta_b: Vec<f64>, a: Vec<u8>) -> Self {
        JointCfLikelihood { x, w, delta_b, a }
    }

    fn kx(&self) -> usize {
        self.x.ncols()
    }

    fn kw(&self) -> usize {
        self.w.ncols()
    }

    fn each(&self, p: &[f64], mut f: impl FnMut(usize, &Obs)) {
        let (kx, kw) = (self.kx(), self.kw());
        let sigma = p[kx + kw].exp();
        let rho = p[kx + kw + 1].tanh();
        let s = 1.0 / p[kx + kw + 1].cosh();
        let r = rho / sigma;
        let c = -0.5 * (2.0 * PI).ln() - sigma.ln();
        for i in 0..self.a.len() {
            let idx: f64 = (0..kx).map(|j| self.x[(i, j)] * p[j]).sum();
            let fit: f64 = (0..kw).map(|j| self.w[(i, j)] * p[kx + j]).sum();
            let e = self.delta_b[i] - fit;
            let m = (idx + r * e) / s;
            let q = 2.0 * self.a[i] as f64 - 1.0;
            let lambda = q * inverse_mills(q * m);
            let ll = c - e * e / (2.0 * sigma * sigma) + log_std_normal_cdf(q * m);
            f(i, &Obs { e, m, lambda, ll });
        }
    }
}

impl Objective for JointCfLikelihood {
    fn dim(&self) -> usize {
        self.kx() + self.kw() + 2
    }

    fn value(&self, p: &[f64]) -> f64 {
        let mut total = 0.0;
        self.each(p, |_, o| total += o.ll);
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let (kx, kw) = (self.kx(), self.kw());
        let sigma = p[kx + kw].exp();
        let rho = p[kx + kw + 1].tanh();
        let s = 1.0 / p[kx + kw + 1].cosh();
        let r = rho / sigma;
        let mut g = vec![0.0; self.dim()];
        self.each(p, |i, o| {
            let gb = o.lambda / s;
            for j in 0..kx {
                g[j] += gb * self.x[(i, j)];
            }
            let gt = o.e / (sigma * sigma) - o.lambda * r / s;
            for j in 0..kw {
                g[kx + j] += gt * self.w[(i, j)];
            }
            g[kx + kw] += -1.0 + o.e * o.e / (sigma * sigma) - o.lambda * rho * o.e / (sigma * s);
            g[kx + kw + 1] += o.lambda * (o.e / sigma * s + o.m * rho);
        });
        g
    }
}

/// Joint-likelihood parameters implied by a two-step fit: with
/// `t = eta sigma_e`, `rho = t / sqrt(1 + t^2)` and structural coefficients
/// are the conditional ones times `sqrt(1 - rho^2)`.
pub fn twostep_implied_joint(fit: &ParticipationFit) -> Result<Vec<f64>> {
    let (Some(eta), Some(sigma), Some(theta)) = (fit.eta_hat, fit.sigma_e_hat, &fit.first_stage_theta) else {
        return Err(Error::invalid("not a control-function two-step fit"));
    };
    let t = eta * sigma;
    let s = 1.0 / (1.0 + t * t).sqrt();
    let rho = t * s;
    let kx = 2 + fit.gamma_hat.len();
    let mut p: Vec<f64> = fit.params[..kx].iter().map(|b| b * s).collect();
    p.extend_from_slice(theta);
    p.push(sigma.ln());
    p.push(rho.atanh());
    Ok(p)
}

/// Full-information MLE of the belief and participation equations with
/// correlated errors. The optimizer works on `ln sigma_e` and `atanh rho`.
pub fn fit_cf_joint_mle(ds: &Dataset, spec: &ModelSpec) -> Result<ParticipationFit> {
    let a = ds.outcome();
    check_both_classes(&a)?;
    let extra = spec.extra(ds);
    let fs_extra = spec.first_stage_extra(&extra);
    let x = participation_design(ds, &extra);
    let kx = x.ncols();
    let names_x = participation_names(&extra);
    check_rank(&x, &names_x)?;
    let fs = first_stage(ds, &fs_extra)?;
    let n = ds.len();
    let sigma0 = (fs.rss / n as f64).sqrt();
    if sigma0 <= 0.0 {
        return Err(Error::RankDeficient("belief equation fits exactly; sigma_e is zero".into()));
    }

    // start from the two-step solution when it exists
    let mut xc = x.clone().insert_column(kx, 0.0);
    xc.column_mut(kx).copy_from_slice(&fs.residuals);
    let (b0, rho0) = match probit_mle(&xc, &a, &[names_x.clone(), vec!["eta".into()]].concat(), &spec.opt) {
        Ok(m) => {
            let t = m.coef[kx] * sigma0;
            let s = 1.0 / (1.0 + t * t).sqrt();
            (m.coef[..kx].iter().map(|b| b * s).collect::<Vec<_>>(), (t * s).clamp(-0.95, 0.95))
        }
        Err(Error::Separation(msg)) => return Err(Error::Separation(msg)),
        Err(_) => (vec![0.0; kx], 0.0),
    };
    let mut init = b0;
    init.extend_from_slice(&fs.theta);
    init.push(sigma0.ln());
    init.push(f64::atanh(rho0));

    let w = belief_design(ds, &fs_extra);
    let lik = JointCfLikelihood::new(x, w, ds.delta_b().to_vec(), a);
    let res = maximize_loglik(&lik, &init, &spec.opt)?;
    let kappa = res.argmax[lik.dim() - 1];
    if res.status == OptStatus::Diverging || !res.converged {
        if kappa.tanh().abs() > 0.999 {
            return Err(Error::NotConverged(format!(
                "joint MLE: error correlation runs to the boundary (rho = {:.6})",
                kappa.tanh()
            )));
        }
        if res.status == OptStatus::Diverging {
            return Err(Error::Separation("joint MLE coefficients diverge".into()));
        }
    }
    let res = res.require_converged("joint MLE")?;
    let covariance = inverse_spd(&(-lik.hessian(&res.argmax)))
        .ok_or_else(|| Error::Singular("joint MLE information".into()))?;

    let kw = lik.kw();
    let mut param_names = names_x;
    param_names.extend(belief_names(&fs_extra).into_iter().map(|n| format!("fs:{n}")));
    param_names.push("ln_sigma_e".into());
    param_names.push("atanh_rho".into());
    let p = res.argmax;
    Ok(ParticipationFit {
        estimator: Estimator::CfJointMle,
        alpha_hat: p[0],
        beta_hat: p[1],
        gamma_hat: p[2..kx].to_vec(),
        eta_hat: None,
        rho_hat: Some(p[kx + kw + 1].tanh()),
        sigma_e_hat: Some(p[kx + kw].exp()),
        first_stage_theta: Some(p[kx..kx + kw].to_vec()),
        params: p,
        param_names,
        covariance,
        covariance_method: "observed information".into(),
        loglik: Some(res.loglik),
        n,
        warnings: extra.merges.clone(),
        extra,
        first_stage_extra: Some(fs_extra),
    })
}
