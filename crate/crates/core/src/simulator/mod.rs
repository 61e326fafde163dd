//! Synthetic populations with planted parameters, and the scalar
//! participation-game equilibrium.

mod equilibrium;
mod generate;
mod preset;

pub use equilibrium::{free_riding_offset, solve_equilibrium, EquilibriumResult, FreeRidingOffset};
pub use generate::{generate_population, read_truth, write_truth, Population};
pub use preset::{preset, PRESETS};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Shape parameters of a standard beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaShapes {
    pub a: f64,
    pub b: f64,
}

impl BetaShapes {
    /// Shapes matching a mean and standard deviation.
    pub fn from_moments(mean: f64, sd: f64) -> Result<Self> {
        let common = mean * (1.0 - mean) / (sd * sd) - 1.0;
        if !(0.0 < mean && mean < 1.0) || common <= 0.0 {
            return Err(Error::invalid(format!("no beta distribution with mean {mean} and sd {sd}")));
        }
        Ok(BetaShapes {
            a: mean * common,
            b: (1.0 - mean) * common,
        })
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationSpec {
    pub name: String,
    pub share: f64,
    pub signal: f64,
}

/// A categorical level with its sampling share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub name: String,
    pub share: f64,
}

/// True parameters of the belief and participation equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    /// `(theta0, theta1, theta2, theta3)`.
    pub theta: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    /// Fixed-effect shifts of the participation index, named like the
    /// estimated coefficients (`location:Hamburg`). Unlisted levels are 0.
    pub gamma: Vec<f64>,
    pub gamma_names: Vec<String>,
    pub rho: f64,
    pub sigma_e: f64,
    /// Direct effect of treatment on the participation index. Nonzero
    /// values break the exclusion restriction.
    #[serde(default)]
    pub direct_treatment_effect: f64,
}

impl PlantedTruth {
    pub fn gamma_of(&self, name: &str) -> f64 {
        self.gamma_names
            .iter()
            .position(|n| n == name)
            .map_or(0.0, |j| self.gamma[j])
    }
}

/// How treatment moves beliefs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UpdateRule {
    /// `delta_b = theta0 + theta1 z + theta2 c + theta3 z c + e`.
    Group,
    /// `delta_b = theta0 + theta2 c + z amplitude tanh(slope (s - b_ref)) + e`:
    /// a monotone response to the gap between signal and reference belief.
    Tanh { amplitude: f64, slope: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub locations: Vec<LocationSpec>,
    pub enroll_dates: Vec<LevelSpec>,
    pub treat_dates: Vec<LevelSpec>,
    pub prior_belief_shapes: BetaShapes,
    pub ref_belief_shapes: BetaShapes,
    pub treat_prob: f64,
    pub truth: PlantedTruth,
    pub psi: UpdateRule,
    /// Shares of the non-participation answers, codes 2 to 5.
    pub nonparticipant_code_shares: [f64; 4],
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n == 0 {
            errs.push("n must be at least 1".to_string());
        }
        if !(self.treat_prob > 0.0 && self.treat_prob < 1.0) {
            errs.push(format!("treat_prob {} outside (0, 1)", self.treat_prob));
        }
        for (what, s) in [("prior", self.prior_belief_shapes), ("reference", self.ref_belief_shapes)] {
            if !(s.a > 0.0 && s.b > 0.0) {
                errs.push(format!("{what} belief shapes must be positive"));
            }
        }
        if self.truth.rho.abs() >= 1.0 {
            errs.push(format!("rho {} outside (-1, 1)", self.truth.rho));
        }
        if self.truth.sigma_e <= 0.0 {
            errs.push("sigma_e must be positive".to_string());
        }
        if self.truth.theta.len() != 4 {
            errs.push("theta needs four entries".to_string());
        }
        if self.truth.gamma.len() != self.truth.gamma_names.len() {
            errs.push("gamma and gamma_names differ in length".to_string());
        }
        let shares = |v: &[f64], what: &str, errs: &mut Vec<String>| {
            if v.is_empty() || v.iter().any(|s| !(*s >= 0.0)) || v.iter().sum::<f64>() <= 0.0 {
                errs.push(format!("{what} shares must be nonnegative with a positive total"));
            }
        };
        shares(&self.locations.iter().map(|l| l.share).collect::<Vec<_>>(), "location", &mut errs);
        shares(&self.enroll_dates.iter().map(|l| l.share).collect::<Vec<_>>(), "enroll_date", &mut errs);
        shares(&self.treat_dates.iter().map(|l| l.share).collect::<Vec<_>>(), "treat_date", &mut errs);
        shares(&self.nonparticipant_code_shares, "outcome code", &mut errs);
        if self.locations.iter().any(|l| !(0.0..=1.0).contains(&l.signal)) {
            errs.push("signals must lie in [0, 1]".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}
