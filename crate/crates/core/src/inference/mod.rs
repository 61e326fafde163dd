//! Hypothesis tests and resampling: Wald and exogeneity tests, i.i.d. and
//! cluster bootstrap, distributional diagnostics, beta fits and a
//! moment-inequality check of the instrument's validity.

mod bootstrap;
mod distribution;
mod late;
mod proportions;
mod wald;

pub use bootstrap::{bootstrap, bootstrap_participation, participation_statistics, BootstrapResult, BootstrapSpec};
pub use distribution::{beta_mle, kruskal_wallis, ks_test, ks_test_one_sample, BetaFit};
pub use late::{late_battery, late_validity_test, DirectionRule, LateBattery, LateOptions, LateValidity, MomentInequality};
pub use proportions::{binomial_test, two_proportion_test};
pub use wald::{exogeneity_test, wald_test};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: Option<usize>,
    pub p_value: f64,
    pub method: String,
    /// Signed square root of a single-restriction Wald statistic.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub z: Option<f64>,
    pub notes: Vec<String>,
}

impl TestResult {
    pub(crate) fn new(statistic: f64, df: Option<usize>, p_value: f64, method: &str) -> Self {
        TestResult {
            statistic,
            df,
            p_value: p_value.clamp(0.0, 1.0),
            method: method.to_string(),
            z: None,
            notes: Vec::new(),
        }
    }

    pub(crate) fn note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }
}

/// Upper tail of a chi-squared distribution.
pub(crate) fn chi2_sf(x: f64, df: usize) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df as f64).map(|d| d.sf(x)).unwrap_or(f64::NAN)
}
