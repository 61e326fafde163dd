//! The end-to-end pipeline on survey data, scored against the estimates
//! reported for the original field study.

use crate::belief::{ate_by_group, fit_ols_belief, BeliefOptions};
use crate::domain::{Dataset, Factor};
use crate::error::Result;
use crate::inference::exogeneity_test;
use crate::participation::{ape, fit_cf_joint_mle, predictive_margins, ApePoint, ModelSpec};
use serde::{Deserialize, Serialize};

/// Reported values for the original survey.
pub const REPORTED_BETA: f64 = -3.3062;
pub const REPORTED_APE: f64 = -0.6787;
pub const REPORTED_ATE_BELOW: f64 = 0.0425;
pub const REPORTED_ATE_ABOVE: f64 = -0.0554;
pub const REPORTED_MARGIN: f64 = 0.1099;
pub const REPORTED_EXOGENEITY_CHI2: f64 = 11.62;

/// Absolute tolerances for each reproduced quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub beta: f64,
    pub ape: f64,
    pub ate: f64,
    pub margin: f64,
    pub chi2: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            beta: 0.01,
            ape: 0.01,
            ate: 0.002,
            margin: 0.001,
            chi2: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproductionRow {
    pub quantity: String,
    pub reported: f64,
    pub estimate: f64,
    pub se: Option<f64>,
    pub difference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ReproductionRow {
    fn new(quantity: &str, reported: f64, estimate: f64, se: Option<f64>, tolerance: f64) -> Self {
        let difference = estimate - reported;
        ReproductionRow {
            quantity: quantity.to_string(),
            reported,
            estimate,
            se,
            difference,
            tolerance,
            pass: difference.abs() <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproductionReport {
    pub rows: Vec<ReproductionRow>,
    pub pass: bool,
    pub warnings: Vec<String>,
}

/// Fixed-effects least squares for the belief equation, the joint
/// control-function MLE with the default model, its overall APE and
/// predictive margin, and the Wald exogeneity statistic.
pub fn reproduce(ds: &Dataset, tol: &Tolerances) -> Result<ReproductionReport> {
    let belief = fit_ols_belief(
        ds,
        &BeliefOptions {
            fixed_effects: Factor::ALL.to_vec(),
            ..BeliefOptions::default()
        },
    )?;
    let ate = ate_by_group(&belief);
    let fit = fit_cf_joint_mle(ds, &ModelSpec::default())?;
    let beta = fit.beta();
    let overall_ape = ape(&fit, ds, ApePoint::Overall)?;
    let margins = predictive_margins(&fit, ds, &[])?;
    let exo = exogeneity_test(&fit)?;
    let rows = vec![
        ReproductionRow::new("beta", REPORTED_BETA, beta.estimate, Some(beta.se), tol.beta),
        ReproductionRow::new("ape_overall", REPORTED_APE, overall_ape.estimate, Some(overall_ape.se), tol.ape),
        ReproductionRow::new("ate_below", REPORTED_ATE_BELOW, ate.below.estimate, Some(ate.below.se), tol.ate),
        ReproductionRow::new("ate_above", REPORTED_ATE_ABOVE, ate.above.estimate, Some(ate.above.se), tol.ate),
        ReproductionRow::new(
            "margin_overall",
            REPORTED_MARGIN,
            margins.overall.estimate,
            Some(margins.overall.se),
            tol.margin,
        ),
        ReproductionRow::new("exogeneity_chi2", REPORTED_EXOGENEITY_CHI2, exo.statistic, None, tol.chi2),
    ];
    let mut warnings = belief.warnings.clone();
    warnings.extend(fit.warnings.iter().cloned());
    Ok(ReproductionReport {
        pass: rows.iter().all(|r| r.pass),
        rows,
        warnings,
    })
}
