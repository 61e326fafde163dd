//! Belief-updating model: the mean belief change given treatment `z` and
//! condition `c` is `L(theta0 + theta1 z + theta2 c + theta3 z c)` under a
//! linear, fractional-probit or beta-probit link. Group treatment effects
//! are the predictive-margin contrasts of the fitted model.

mod beta;
mod fractional;
mod ols;

pub use beta::{fit_beta_regression, BetaRegressionLikelihood};
pub use fractional::{fit_fractional_probit, FractionalProbitLikelihood};
pub use ols::{fit_ols_belief, least_squares, LeastSquares};

use crate::design::ExtraColumns;
use crate::domain::{Dataset, Factor};
use crate::error::{Error, Result};
use crate::numerics::{std_normal_cdf, std_normal_pdf, Estimate, OptOptions};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Linear,
    FractionalProbit,
    BetaProbit,
}

/// Covariance used for the fractional-probit quasi-MLE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpCovariance {
    Sandwich,
    ObservedInformation,
}

/// What to do with transformed responses at exactly 0 or 1 in the beta
/// regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Replace every `y` by `(y (n - 1) + 0.5) / n` when any boundary value
    /// is present.
    Shrink,
    Reject,
}

#[derive(Debug, Clone)]
pub struct BeliefOptions {
    pub fixed_effects: Vec<Factor>,
    pub covariates: bool,
    pub fp_covariance: FpCovariance,
    pub boundary: BoundaryPolicy,
    pub opt: OptOptions,
}

impl Default for BeliefOptions {
    fn default() -> Self {
        BeliefOptions {
            fixed_effects: Vec::new(),
            covariates: false,
            fp_covariance: FpCovariance::Sandwich,
            boundary: BoundaryPolicy::Shrink,
            opt: OptOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeliefUpdateFit {
    pub link: Link,
    /// `(theta0, theta1, theta2, theta3)` followed by any extra columns.
    pub theta_hat: Vec<f64>,
    pub param_names: Vec<String>,
    /// Covariance of `theta_hat` (and of the log precision, last, for the
    /// beta link).
    #[serde(with = "crate::serde_matrix")]
    pub covariance: DMatrix<f64>,
    /// First-stage residuals; linear link only.
    pub residuals: Option<Vec<f64>>,
    /// Log precision of the beta distribution; beta link only.
    pub scale_hat: Option<f64>,
    /// Residual sum of squares for the linear link, (pseudo-)log-likelihood
    /// otherwise.
    pub loglik_or_rss: f64,
    pub n: usize,
    pub extra: ExtraColumns,
    pub warnings: Vec<String>,
}

/// Treatment effects on beliefs in the below (`c = 0`) and above (`c = 1`)
/// groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupATE {
    pub below: Estimate,
    pub above: Estimate,
}

impl GroupATE {
    fn scaled(&self, k: f64) -> GroupATE {
        GroupATE {
            below: Estimate::new(self.below.estimate * k, self.below.se * k.abs()),
            above: Estimate::new(self.above.estimate * k, self.above.se * k.abs()),
        }
    }
}

/// `[1, z, c, z c, extras...]` for every record.
pub(crate) fn belief_design(ds: &Dataset, extra: &ExtraColumns) -> DMatrix<f64> {
    let k = 4 + extra.len();
    let mut data = Vec::with_capacity(ds.len() * k);
    let cond = ds.condition();
    for (i, r) in ds.records().iter().enumerate() {
        let z = r.z as f64;
        let c = cond[i] as f64;
        data.extend_from_slice(&[1.0, z, c, z * c]);
        extra.push_row(r, &mut data);
    }
    DMatrix::from_row_slice(ds.len(), k, &data)
}

pub(crate) fn belief_names(extra: &ExtraColumns) -> Vec<String> {
    let mut names: Vec<String> = ["const", "z", "c", "z*c"].iter().map(|s| s.to_string()).collect();
    names.extend(extra.names());
    names
}

/// All four `(z, c)` cells must be populated for the saturated model.
pub(crate) fn check_cells(ds: &Dataset) -> Result<()> {
    let cells = ds.summary().condition_by_treatment;
    let z_n = [cells[0][0] + cells[1][0], cells[0][1] + cells[1][1]];
    let c_n = [cells[0][0] + cells[0][1], cells[1][0] + cells[1][1]];
    if z_n.contains(&0) {
        return Err(Error::RankDeficient("z (treatment does not vary)".into()));
    }
    if c_n.contains(&0) {
        return Err(Error::RankDeficient("c (condition does not vary)".into()));
    }
    if cells.iter().flatten().any(|&n| n == 0) {
        return Err(Error::RankDeficient("z*c (a treatment-by-condition cell is empty)".into()));
    }
    Ok(())
}

/// Transformed response `(delta_b + 1) / 2`.
pub(crate) fn transformed_response(ds: &Dataset) -> Vec<f64> {
    ds.delta_b().iter().map(|d| (d + 1.0) / 2.0).collect()
}

fn link_value(link: Link, t: f64) -> f64 {
    match link {
        Link::Linear => t,
        _ => std_normal_cdf(t),
    }
}

fn link_slope(link: Link, t: f64) -> f64 {
    match link {
        Link::Linear => 1.0,
        _ => std_normal_pdf(t),
    }
}

/// Group treatment effects as predictive-margin differences, on the scale
/// of the fitted response, with delta-method standard errors. Extra
/// fixed-effect columns are held at their reference level.
pub fn ate_by_group(fit: &BeliefUpdateFit) -> GroupATE {
    let th = &fit.theta_hat;
    let k = fit.covariance.nrows();
    // `effect` is the index difference, used directly for the linear link so
    // that the identities with the coefficients hold exactly
    let contrast = |base: f64, effect: f64, cols_base: &[usize], cols_treated: &[usize]| {
        let treated = base + effect;
        let est = match fit.link {
            Link::Linear => effect,
            _ => link_value(fit.link, treated) - link_value(fit.link, base),
        };
        let mut g = DVector::zeros(k);
        for &j in cols_treated {
            g[j] += link_slope(fit.link, treated);
        }
        for &j in cols_base {
            g[j] -= link_slope(fit.link, base);
        }
        let var = g.dot(&(&fit.covariance * &g));
        Estimate::new(est, var.max(0.0).sqrt())
    };
    GroupATE {
        below: contrast(th[0], th[1], &[0], &[0, 1]),
        above: contrast(th[0] + th[2], th[1] + th[3], &[0, 2], &[0, 1, 2, 3]),
    }
}

/// Group effects on the belief-change scale: nonlinear links model
/// `(delta_b + 1) / 2`, so their effects are doubled.
pub fn ate_by_group_retransformed(fit: &BeliefUpdateFit) -> GroupATE {
    match fit.link {
        Link::Linear => ate_by_group(fit),
        _ => ate_by_group(fit).scaled(2.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub residuals: Vec<f64>,
    /// `sqrt(sum(e^2) / n)`, the maximum-likelihood residual scale.
    pub sd: f64,
}

/// First-stage residuals `delta_b - theta' w` for `ds`, using the fit's
/// column coding.
pub fn residuals(fit: &BeliefUpdateFit, ds: &Dataset) -> Result<Residuals> {
    if fit.link != Link::Linear {
        return Err(Error::LinkMismatch(format!(
            "control-function residuals need the linear belief model, got {:?}",
            fit.link
        )));
    }
    let w = belief_design(ds, &fit.extra);
    let theta = DVector::from_column_slice(&fit.theta_hat);
    let fitted = &w * &theta;
    let residuals: Vec<f64> = ds.delta_b().iter().zip(fitted.iter()).map(|(d, f)| d - f).collect();
    let sd = (residuals.iter().map(|e| e * e).sum::<f64>() / residuals.len() as f64).sqrt();
    Ok(Residuals { residuals, sd })
}

#[cfg(test)]
pub(crate) mod tests;
