use super::{
    belief_design, belief_names, check_cells, transformed_response, BeliefOptions, BeliefUpdateFit,
    BoundaryPolicy, Link,
};
use crate::design::ExtraColumns;
use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{
    maximize_loglik, std_normal_cdf, std_normal_pdf, std_normal_quantile, Objective, OptOptions,
};
use nalgebra::DMatrix;
use statrs::function::gamma::{digamma, ln_gamma};

const MU_EPS: f64 = 1e-12;

/// Beta regression with probit mean link and log precision link. The
/// parameter vector is `(theta..., ln phi)`.
#[derive(Debug, Clone)]
pub struct BetaRegressionLikelihood {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    logit_y: Vec<f64>,
    ln_y: Vec<f64>,
    ln_1my: Vec<f64>,
}

impl BetaRegressionLikelihood {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>) -> Self {
        let ln_y = y.iter().map(|v| v.ln()).collect::<Vec<_>>();
        let ln_1my = y.iter().map(|v| (-v).ln_1p()).collect::<Vec<_>>();
        let logit_y = ln_y.iter().zip(&ln_1my).map(|(a, b)| a - b).collect();
        BetaRegressionLikelihood {
            x,
            y,
            logit_y,
            ln_y,
            ln_1my,
        }
    }

    fn split<'a>(&self, p: &'a [f64]) -> (&'a [f64], f64) {
        let k = self.x.ncols();
        (&p[..k], p[k])
    }

    fn index(&self, theta: &[f64], i: usize) -> f64 {
        self.x.row(i).iter().zip(theta).map(|(a, b)| a * b).sum()
    }
}

impl Objective for BetaRegressionLikelihood {
    fn dim(&self) -> usize {
        self.x.ncols() + 1
    }

    fn value(&self, p: &[f64]) -> f64 {
        let (theta, zeta) = self.split(p);
        let phi = zeta.exp();
        let lg_phi = ln_gamma(phi);
        (0..self.y.len())
            .map(|i| {
                let mu = std_normal_cdf(self.index(theta, i)).clamp(MU_EPS, 1.0 - MU_EPS);
                lg_phi - ln_gamma(mu * phi) - ln_gamma((1.0 - mu) * phi)
                    + (mu * phi - 1.0) * self.ln_y[i]
                    + ((1.0 - mu) * phi - 1.0) * self.ln_1my[i]
            })
            .sum()
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let (theta, zeta) = self.split(p);
        let k = self.x.ncols();
        let phi = zeta.exp();
        let dg_phi = digamma(phi);
        let mut g = vec![0.0; k + 1];
        for i in 0..self.y.len() {
            let t = self.index(theta, i);
            let mu = std_normal_cdf(t).clamp(MU_EPS, 1.0 - MU_EPS);
            let d_a = digamma(mu * phi);
            let d_b = digamma((1.0 - mu) * phi);
            let dmu = phi * (self.logit_y[i] - d_a + d_b) * std_normal_pdf(t);
            for j in 0..k {
                g[j] += dmu * self.x[(i, j)];
            }
            g[k] += phi
                * (dg_phi - mu * d_a - (1.0 - mu) * d_b + mu * self.ln_y[i] + (1.0 - mu) * self.ln_1my[i]);
        }
        g
    }
}

/// Beta-regression MLE of the transformed belief change. `scale_hat` is the
/// fitted log precision.
pub fn fit_beta_regression(ds: &Dataset, opts: &BeliefOptions) -> Result<BeliefUpdateFit> {
    check_cells(ds)?;
    let extra = ExtraColumns::build(ds, &opts.fixed_effects, opts.covariates, None);
    let x = belief_design(ds, &extra);
    let mut y = transformed_response(ds);
    let n = y.len() as f64;
    let mut warnings = Vec::new();
    if y.iter().any(|&v| v <= 0.0 || v >= 1.0) {
        match opts.boundary {
            BoundaryPolicy::Shrink => {
                y.iter_mut().for_each(|v| *v = (*v * (n - 1.0) + 0.5) / n);
                warnings.push("boundary responses present: all responses shrunk by (y(n-1)+.5)/n".into());
            }
            BoundaryPolicy::Reject => {
                return Err(Error::invalid(
                    "transformed responses at 0 or 1; use the shrink boundary policy or drop them",
                ))
            }
        }
    }
    if y.iter().any(|&v| v <= 0.0 || v >= 1.0) {
        return Err(Error::invalid("responses still at 0 or 1 after boundary adjustment"));
    }
    let names = {
        let mut v = belief_names(&extra);
        v.push("ln_phi".into());
        v
    };

    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        // precision is unbounded; report the mean model only
        let mut theta = vec![0.0; x.ncols()];
        theta[0] = std_normal_quantile(mean);
        warnings.push("degenerate scale: constant response, precision unbounded".into());
        let k = theta.len();
        return Ok(BeliefUpdateFit {
            link: Link::BetaProbit,
            theta_hat: theta,
            param_names: names,
            covariance: DMatrix::from_element(k + 1, k + 1, f64::NAN),
            residuals: None,
            scale_hat: Some(f64::INFINITY),
            loglik_or_rss: f64::INFINITY,
            n: ds.len(),
            extra,
            warnings,
        });
    }

    let lik = BetaRegressionLikelihood::new(x.clone(), y.clone());
    // warm start: fractional-probit mean model and moment-matched precision
    let fp = super::FractionalProbitLikelihood::new(x, y);
    let fp_start = maximize_loglik(&fp, &vec![0.0; fp.x.ncols()], &OptOptions { tol: 1e-6, max_iter: 100 })?;
    let mut init = fp_start.argmax;
    let phi0 = (mean * (1.0 - mean) / var - 1.0).max(0.5);
    init.push(phi0.ln());

    let res = maximize_loglik(&lik, &init, &opts.opt)?.require_converged("beta regression")?;
    let covariance = res.require_covariance("beta regression")?;
    let k = lik.x.ncols();
    Ok(BeliefUpdateFit {
        link: Link::BetaProbit,
        theta_hat: res.argmax[..k].to_vec(),
        param_names: names,
        covariance,
        residuals: None,
        scale_hat: Some(res.argmax[k]),
        loglik_or_rss: res.loglik,
        n: ds.len(),
        extra,
        warnings,
    })
}
