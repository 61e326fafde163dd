use super::{chi2_sf, TestResult};
use crate::error::{Error, Result};
use crate::numerics::{inverse_spd, two_sided_normal_p};
use crate::participation::ParticipationFit;
use nalgebra::{DMatrix, DVector};

/// Wald test of `R theta = r`. With one restriction the signed root is
/// reported as `z` and the p-value is the two-sided normal tail.
pub fn wald_test(estimate: &[f64], covariance: &DMatrix<f64>, r: &DMatrix<f64>, target: &[f64]) -> Result<TestResult> {
    let k = estimate.len();
    let q = r.nrows();
    if r.ncols() != k || covariance.shape() != (k, k) || target.len() != q {
        return Err(Error::invalid("restriction, covariance and estimate dimensions disagree"));
    }
    if q == 0 || q > k {
        return Err(Error::invalid(format!("{q} restrictions on {k} parameters")));
    }
    let diff = r * DVector::from_column_slice(estimate) - DVector::from_column_slice(target);
    let v = r * covariance * r.transpose();
    let inv = inverse_spd(&v).ok_or_else(|| Error::Singular("restricted covariance R V R'".into()))?;
    let w = (diff.transpose() * inv * &diff)[(0, 0)].max(0.0);
    if q == 1 {
        let z = diff[0] / v[(0, 0)].sqrt();
        let mut t = TestResult::new(w, Some(1), two_sided_normal_p(z), "wald");
        t.z = Some(z);
        Ok(t)
    } else {
        Ok(TestResult::new(w, Some(q), chi2_sf(w, q), "wald"))
    }
}

/// Wald test of zero error correlation, on the `atanh rho` scale the joint
/// MLE is estimated on.
pub fn exogeneity_test(fit: &ParticipationFit) -> Result<TestResult> {
    let j = fit
        .position("atanh_rho")
        .ok_or_else(|| Error::invalid("exogeneity test needs a joint control-function fit"))?;
    let k = fit.params.len();
    let mut r = DMatrix::zeros(1, k);
    r[(0, j)] = 1.0;
    let mut t = wald_test(&fit.params, &fit.covariance, &r, &[0.0])?;
    t.method = "wald: rho = 0".into();
    Ok(t)
}
