use super::{belief_design, belief_names, BeliefOptions, BeliefUpdateFit, Link};
use crate::design::ExtraColumns;
use crate::domain::Dataset;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coef: DVector<f64>,
    pub xtx_inv: DMatrix<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
}

/// Least squares through a QR factorization. A column whose diagonal
/// element in `R` is negligible relative to its norm is reported by name.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<LeastSquares> {
    let k = x.ncols();
    if x.nrows() < k {
        return Err(Error::RankDeficient(format!(
            "{} rows for {k} regressors",
            x.nrows()
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..k {
        let norm = x.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= 1e-10 * norm.max(1.0) {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("column {j}"));
            return Err(Error::RankDeficient(name));
        }
    }
    let qty = qr.q().transpose() * y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Singular("triangular inverse failed".into()))?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let residuals = y - x * &coef;
    let rss = residuals.norm_squared();
    Ok(LeastSquares {
        coef,
        xtx_inv,
        residuals,
        rss,
    })
}

/// Ordinary least squares of the belief change on `(1, z, c, z c)` plus any
/// configured fixed effects, with the classical covariance
/// `s^2 (X'X)^-1`, `s^2 = RSS / (n - k)`.
///
/// A saturated fit (`n = k`) returns exact coefficients with a NaN
/// covariance and a warning.
pub fn fit_ols_belief(ds: &Dataset, opts: &BeliefOptions) -> Result<BeliefUpdateFit> {
    let extra = ExtraColumns::build(ds, &opts.fixed_effects, opts.covariates, None);
    let names = belief_names(&extra);
    let x = belief_design(ds, &extra);
    let y = DVector::from_column_slice(ds.delta_b());
    let ls = least_squares(&x, &y, &names)?;
    let n = ds.len();
    let k = x.ncols();
    let mut warnings = Vec::new();
    let covariance = if n > k {
        &ls.xtx_inv * (ls.rss / (n - k) as f64)
    } else {
        warnings.push("saturated fit: residual variance and covariance unavailable".into());
        DMatrix::from_element(k, k, f64::NAN)
    };
    Ok(BeliefUpdateFit {
        link: Link::Linear,
        theta_hat: ls.coef.iter().copied().collect(),
        param_names: names,
        covariance,
        residuals: Some(ls.residuals.iter().copied().collect()),
        scale_hat: None,
        loglik_or_rss: ls.rss,
        n,
        extra,
        warnings,
    })
}
