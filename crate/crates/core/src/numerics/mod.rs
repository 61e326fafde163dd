//! Shared numerical kernel: normal link functions, the maximum-likelihood
//! optimizer, finite differences and reproducible random streams.

mod diff;
mod linalg;
mod normal;
mod optimize;
mod rng;

pub use diff::finite_diff_grad;
pub use linalg::{inverse_spd, pseudo_inverse, quadratic_form, PseudoInverse};
pub use normal::{
    inverse_mills, log_std_normal_cdf, probit_terms, std_normal_cdf, std_normal_pdf, std_normal_quantile,
    two_sided_normal_p,
};
pub use optimize::{
    maximize_loglik, numeric_hessian, FnObjective, Objective, OptOptions, OptResult, OptStatus,
};
pub use rng::RandomStream;

use serde::{Deserialize, Serialize};

/// A point estimate with its standard error and the two-sided Wald p-value
/// of the null that the quantity is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub se: f64,
    pub p: f64,
}

impl Estimate {
    pub fn new(estimate: f64, se: f64) -> Self {
        let p = if se > 0.0 && se.is_finite() {
            two_sided_normal_p(estimate / se)
        } else if estimate == 0.0 {
            1.0
        } else {
            0.0
        };
        Estimate { estimate, se, p }
    }

    pub fn z(&self) -> f64 {
        self.estimate / self.se
    }

    /// Symmetric normal-theory interval at the given coverage.
    pub fn interval(&self, level: f64) -> (f64, f64) {
        let q = std_normal_quantile(0.5 + level / 2.0);
        (self.estimate - q * self.se, self.estimate + q * self.se)
    }
}
