//! Participation models: `Pr(a = 1 | delta_b, x) = Phi(alpha + beta delta_b + x gamma)`
//! estimated by a naive probit, a control-function two-step, the joint
//! control-function MLE and Newey's minimum chi-squared estimator, with
//! predictive margins and average partial effects.

mod joint;
mod margins;
mod newey;
mod probit;

pub use joint::{fit_cf_joint_mle, twostep_implied_joint, JointCfLikelihood};
pub use margins::{
    ape, ape_table, delta_method, predictive_margins, ApePoint, APETable, DeltaEstimate, Functional,
    GridMargin, LinearFunctional, MarginTable, StructuralFunctional,
};
pub use newey::fit_newey_minchi2;
pub use probit::{fit_cf_twostep, fit_probit, probit_mle, ProbitMle};

use crate::belief::least_squares;
use crate::design::ExtraColumns;
use crate::domain::{Dataset, Factor};
use crate::error::{Error, Result};
use crate::numerics::{Estimate, OptOptions};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Probit,
    CfTwostep,
    CfJointMle,
    NeweyMinchi2,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::Probit,
        Estimator::CfTwostep,
        Estimator::CfJointMle,
        Estimator::NeweyMinchi2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Probit => "probit",
            Estimator::CfTwostep => "cf_twostep",
            Estimator::CfJointMle => "cf_joint_mle",
            Estimator::NeweyMinchi2 => "newey_minchi2",
        }
    }

    pub fn parse(s: &str) -> Result<Estimator> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown estimator `{s}`")))
    }
}

/// Right-hand side of the participation equation and first stage.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub fixed_effects: Vec<Factor>,
    pub covariates: bool,
    /// Merge fixed-effect cells that predict participation perfectly.
    pub merge_separating: bool,
    /// Include the participation equation's fixed effects and covariates in
    /// the first-stage belief regression.
    pub first_stage_extras: bool,
    /// Reuse this coding instead of building one from the data (bootstrap
    /// replicates keep the full-sample design).
    pub design: Option<ExtraColumns>,
    pub opt: OptOptions,
}

impl Default for ModelSpec {
    /// Location, enrollment-date and treatment-date fixed effects.
    fn default() -> Self {
        ModelSpec {
            fixed_effects: Factor::ALL.to_vec(),
            covariates: true,
            merge_separating: true,
            first_stage_extras: true,
            design: None,
            opt: OptOptions::default(),
        }
    }
}

impl ModelSpec {
    /// Constant and belief change only.
    pub fn bare() -> Self {
        ModelSpec {
            fixed_effects: Vec::new(),
            covariates: false,
            ..ModelSpec::default()
        }
    }

    pub(crate) fn extra(&self, ds: &Dataset) -> ExtraColumns {
        match &self.design {
            Some(d) => d.clone(),
            None => {
                let a = ds.outcome();
                let outcome = self.merge_separating.then_some(a.as_slice());
                ExtraColumns::build(ds, &self.fixed_effects, self.covariates, outcome)
            }
        }
    }

    pub(crate) fn first_stage_extra(&self, extra: &ExtraColumns) -> ExtraColumns {
        if self.first_stage_extras {
            extra.clone()
        } else {
            ExtraColumns::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticipationFit {
    pub estimator: Estimator,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub gamma_hat: Vec<f64>,
    /// Control-function coefficient; two-step only.
    pub eta_hat: Option<f64>,
    /// Error correlation; joint MLE only.
    pub rho_hat: Option<f64>,
    /// Belief-equation error sd; control-function estimators.
    pub sigma_e_hat: Option<f64>,
    /// All estimated parameters in internal order, matching `covariance`.
    /// Joint MLE carries `ln sigma_e` and `atanh rho` here.
    pub params: Vec<f64>,
    pub param_names: Vec<String>,
    #[serde(with = "crate::serde_matrix")]
    pub covariance: DMatrix<f64>,
    /// How `covariance` was obtained.
    pub covariance_method: String,
    pub loglik: Option<f64>,
    pub n: usize,
    pub extra: ExtraColumns,
    /// First-stage coefficients on `[1, z, c, z c, extras]`.
    pub first_stage_theta: Option<Vec<f64>>,
    pub first_stage_extra: Option<ExtraColumns>,
    pub warnings: Vec<String>,
}

/// One named coefficient on its reporting scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    #[serde(flatten)]
    pub value: Estimate,
}

impl ParticipationFit {
    fn se(&self, j: usize) -> f64 {
        self.covariance[(j, j)].max(0.0).sqrt()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    pub fn beta(&self) -> Estimate {
        Estimate::new(self.beta_hat, self.se(1))
    }

    /// Coefficients with standard errors; `rho` and `sigma_e` are
    /// back-transformed with delta-method errors.
    pub fn coefficients(&self) -> Vec<Coefficient> {
        let mut out = Vec::with_capacity(self.params.len());
        for (j, name) in self.param_names.iter().enumerate() {
            let p = self.params[j];
            let (name, value) = match name.as_str() {
                "atanh_rho" => {
                    let r = p.tanh();
                    ("rho".to_string(), Estimate::new(r, (1.0 - r * r) * self.se(j)))
                }
                "ln_sigma_e" => {
                    let s = p.exp();
                    ("sigma_e".to_string(), Estimate::new(s, s * self.se(j)))
                }
                _ => (name.clone(), Estimate::new(p, self.se(j))),
            };
            out.push(Coefficient { name, value });
        }
        out
    }
}

/// Fits `estimator` on `ds`.
pub fn fit(ds: &Dataset, spec: &ModelSpec, estimator: Estimator) -> Result<ParticipationFit> {
    match estimator {
        Estimator::Probit => fit_probit(ds, spec),
        Estimator::CfTwostep => fit_cf_twostep(ds, spec),
        Estimator::CfJointMle => fit_cf_joint_mle(ds, spec),
        Estimator::NeweyMinchi2 => fit_newey_minchi2(ds, spec),
    }
}

/// `[1, delta_b, extras...]` for every record.
pub(crate) fn participation_design(ds: &Dataset, extra: &ExtraColumns) -> DMatrix<f64> {
    let k = 2 + extra.len();
    let mut data = Vec::with_capacity(ds.len() * k);
    for (r, &d) in ds.records().iter().zip(ds.delta_b()) {
        data.extend_from_slice(&[1.0, d]);
        extra.push_row(r, &mut data);
    }
    DMatrix::from_row_slice(ds.len(), k, &data)
}

pub(crate) fn participation_names(extra: &ExtraColumns) -> Vec<String> {
    let mut names = vec!["const".to_string(), "delta_b".to_string()];
    names.extend(extra.names());
    names
}

/// Errors naming the first column that is collinear with those before it.
pub(crate) fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    if x.nrows() < x.ncols() {
        return Err(Error::RankDeficient(format!(
            "{} observations for {} parameters",
            x.nrows(),
            x.ncols()
        )));
    }
    least_squares(x, &DVector::zeros(x.nrows()), names).map(|_| ())
}

pub(crate) fn check_both_classes(a: &[u8]) -> Result<()> {
    let ones = a.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == a.len() {
        return Err(Error::Separation(format!(
            "participation has a single class ({ones} of {} participate)",
            a.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests;
