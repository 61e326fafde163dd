use super::{
    belief_design, belief_names, check_cells, transformed_response, BeliefOptions, BeliefUpdateFit,
    FpCovariance, Link,
};
use crate::design::ExtraColumns;
use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{inverse_spd, maximize_loglik, probit_terms, Objective};
use nalgebra::{DMatrix, DVector};

/// Bernoulli quasi-likelihood with probit mean for a response in `[0, 1]`.
/// With a binary response this is the ordinary probit likelihood.
#[derive(Debug, Clone)]
pub struct FractionalProbitLikelihood {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
}

impl FractionalProbitLikelihood {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>) -> Self {
        FractionalProbitLikelihood { x, y }
    }

    pub fn from_dataset(ds: &Dataset, extra: &ExtraColumns) -> Self {
        Self::new(belief_design(ds, extra), transformed_response(ds))
    }

    fn index(&self, p: &[f64]) -> DVector<f64> {
        &self.x * DVector::from_column_slice(p)
    }

    /// Per-observation scores, one row per record.
    pub fn scores(&self, p: &[f64]) -> DMatrix<f64> {
        let t = self.index(p);
        let mut s = self.x.clone();
        for i in 0..self.y.len() {
            let (_, d1, _) = probit_terms(self.y[i], t[i]);
            s.row_mut(i).scale_mut(d1);
        }
        s
    }
}

impl Objective for FractionalProbitLikelihood {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn value(&self, p: &[f64]) -> f64 {
        let t = self.index(p);
        self.y.iter().zip(t.iter()).map(|(&y, &t)| probit_terms(y, t).0).sum()
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let t = self.index(p);
        let w = DVector::from_iterator(self.y.len(), self.y.iter().zip(t.iter()).map(|(&y, &t)| probit_terms(y, t).1));
        (self.x.transpose() * w).iter().copied().collect()
    }

    fn hessian(&self, p: &[f64]) -> DMatrix<f64> {
        let t = self.index(p);
        let mut xw = self.x.clone();
        for i in 0..self.y.len() {
            let (_, _, d2) = probit_terms(self.y[i], t[i]);
            xw.row_mut(i).scale_mut(d2);
        }
        self.x.transpose() * xw
    }
}

/// `A^-1 B A^-1` with `A` the negative Hessian and `B` the outer product of
/// the per-observation scores.
pub(crate) fn sandwich(neg_hessian_inv: &DMatrix<f64>, scores: &DMatrix<f64>) -> DMatrix<f64> {
    let meat = scores.transpose() * scores;
    let v = neg_hessian_inv * meat * neg_hessian_inv;
    (&v + v.transpose()) * 0.5
}

/// Fractional-probit quasi-MLE of the transformed belief change
/// `(delta_b + 1) / 2`.
pub fn fit_fractional_probit(ds: &Dataset, opts: &BeliefOptions) -> Result<BeliefUpdateFit> {
    check_cells(ds)?;
    let extra = ExtraColumns::build(ds, &opts.fixed_effects, opts.covariates, None);
    let lik = FractionalProbitLikelihood::from_dataset(ds, &extra);
    if let Some(bad) = lik.y.iter().find(|y| !(0.0..=1.0).contains(*y)) {
        return Err(Error::invalid(format!("transformed response {bad} outside [0, 1]")));
    }
    let init = vec![0.0; lik.dim()];
    let res = maximize_loglik(&lik, &init, &opts.opt)?.require_converged("fractional probit")?;
    let inv = inverse_spd(&(-lik.hessian(&res.argmax)))
        .ok_or_else(|| Error::Singular("fractional probit information".into()))?;
    let covariance = match opts.fp_covariance {
        FpCovariance::Sandwich => sandwich(&inv, &lik.scores(&res.argmax)),
        FpCovariance::ObservedInformation => inv,
    };
    Ok(BeliefUpdateFit {
        link: Link::FractionalProbit,
        theta_hat: res.argmax,
        param_names: belief_names(&extra),
        covariance,
        residuals: None,
        scale_hat: None,
        loglik_or_rss: res.loglik,
        n: ds.len(),
        extra,
        warnings: Vec::new(),
    })
}
