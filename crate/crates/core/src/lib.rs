//! Estimation of strategic interdependence in binary participation
//! decisions from a randomized information intervention.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`domain`] validates survey records and derives the condition
//!    indicator and belief change.
//! 2. [`belief`] fits the belief-updating model and reports group-specific
//!    treatment effects on beliefs.
//! 3. [`participation`] fits the participation probit with the belief
//!    change instrumented through a control function, and reports
//!    predictive margins and average partial effects.
//! 4. [`inference`] supplies Wald tests, bootstrap resampling,
//!    distributional diagnostics and the instrument validity test.
//!
//! [`reproduce`] runs the whole pipeline on survey data and scores it
//! against the originally reported estimates. [`simulator`] generates synthetic populations with planted parameters
//! and solves the participation game for its equilibrium.

pub mod belief;
pub mod design;
pub mod domain;
pub mod error;
pub mod inference;
pub mod numerics;
pub mod participation;
pub mod reproduce;
pub mod simulator;

pub use belief::{BeliefUpdateFit, GroupATE, Link};
pub use domain::{Dataset, LocationSignal, SubjectRecord};
pub use error::{Error, Result};
pub use inference::{BootstrapSpec, TestResult};
pub use numerics::{Estimate, OptResult, RandomStream};
pub use participation::{APETable, Estimator, MarginTable, ModelSpec, ParticipationFit};
pub use simulator::{EquilibriumResult, PlantedTruth, SimConfig};

pub(crate) mod serde_matrix {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let n = rows.len();
        let k = rows.first().map_or(0, |r| r.len());
        Ok(DMatrix::from_row_iterator(n, k, rows.into_iter().flatten()))
    }
}
