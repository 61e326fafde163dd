use super::{participation_design, Estimator, ParticipationFit};
use crate::belief::belief_design;
use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{finite_diff_grad, std_normal_cdf, std_normal_pdf, Estimate};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// A smooth scalar function of a fit's parameter vector.
pub trait Functional {
    fn value(&self, params: &[f64]) -> f64;

    /// Central differences unless overridden.
    fn gradient(&self, params: &[f64]) -> Vec<f64> {
        finite_diff_grad(|p| self.value(p), params, 1e-6)
    }
}

/// `offset + weights . params`.
#[derive(Debug, Clone)]
pub struct LinearFunctional {
    pub weights: Vec<f64>,
    pub offset: f64,
}

impl LinearFunctional {
    /// The `j`th coordinate of a `dim`-vector.
    pub fn coordinate(dim: usize, j: usize) -> Self {
        let mut weights = vec![0.0; dim];
        weights[j] = 1.0;
        LinearFunctional { weights, offset: 0.0 }
    }
}

impl Functional for LinearFunctional {
    fn value(&self, params: &[f64]) -> f64 {
        self.offset + self.weights.iter().zip(params).map(|(w, p)| w * p).sum::<f64>()
    }

    fn gradient(&self, _params: &[f64]) -> Vec<f64> {
        self.weights.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaEstimate {
    #[serde(flatten)]
    pub value: Estimate,
    /// The gradient vanished, so the standard error is zero by construction.
    pub degenerate: bool,
}

/// `se = sqrt(g' V g)` with `g` the functional's gradient at the estimate.
pub fn delta_method<F: Functional + ?Sized>(fit: &ParticipationFit, f: &F) -> DeltaEstimate {
    delta_method_at(&fit.params, &fit.covariance, f)
}

pub(crate) fn delta_method_at<F: Functional + ?Sized>(params: &[f64], cov: &DMatrix<f64>, f: &F) -> DeltaEstimate {
    let g = DVector::from_vec(f.gradient(params));
    let var = (g.transpose() * cov * &g)[(0, 0)];
    DeltaEstimate {
        value: Estimate::new(f.value(params), var.max(0.0).sqrt()),
        degenerate: g.iter().all(|&v| v == 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Quantity {
    Margin,
    Ape,
}

/// Average structural function `mean_i Phi(t_i)` or its derivative in the
/// belief change `mean_i phi(t_i) beta`, where `t_i` is the participation
/// index of record `i` with the belief change either observed or fixed.
///
/// For the two-step fit the index is `t_i + eta e_j` and the control
/// residual is integrated over its empirical distribution, averaging over
/// all pairs `(i, j)`.
#[derive(Debug, Clone)]
pub struct StructuralFunctional {
    rows: Vec<Vec<f64>>,
    control: Option<Vec<f64>>,
    dim: usize,
    at: Option<f64>,
    quantity: Quantity,
}

impl StructuralFunctional {
    fn eval(&self, p: &[f64]) -> (f64, Vec<f64>) {
        let k = self.rows.first().map_or(0, |r| r.len());
        let beta = p[1];
        let zero = [0.0];
        let controls: &[f64] = self.control.as_deref().unwrap_or(&zero);
        let eta = if self.control.is_some() { p[k] } else { 0.0 };
        let mut value = 0.0;
        let mut grad = vec![0.0; self.dim];
        let mut h = vec![0.0; k];
        for row in &self.rows {
            h.copy_from_slice(row);
            if let Some(d) = self.at {
                h[1] = d;
            }
            let base: f64 = (0..k).map(|j| p[j] * h[j]).sum();
            // sums over the control draws of the kernel and its index derivative
            let (mut g0, mut g1, mut ge) = (0.0, 0.0, 0.0);
            for &e in controls {
                let t = base + eta * e;
                let pdf = std_normal_pdf(t);
                let (v, dv) = match self.quantity {
                    Quantity::Margin => (std_normal_cdf(t), pdf),
                    Quantity::Ape => (pdf * beta, -beta * t * pdf),
                };
                g0 += v;
                g1 += dv;
                ge += dv * e;
                if self.quantity == Quantity::Ape {
                    grad[1] += pdf;
                }
            }
            value += g0;
            for j in 0..k {
                grad[j] += g1 * h[j];
            }
            if self.control.is_some() {
                grad[k] += ge;
            }
        }
        let m = (self.rows.len() * controls.len()) as f64;
        grad.iter_mut().for_each(|g| *g /= m);
        (value / m, grad)
    }
}

impl Functional for StructuralFunctional {
    fn value(&self, params: &[f64]) -> f64 {
        self.eval(params).0
    }

    fn gradient(&self, params: &[f64]) -> Vec<f64> {
        self.eval(params).1
    }
}

/// Index regressors `[1, delta_b, extras]` for every record, and the
/// control residuals for the two-step fit.
fn index_rows(fit: &ParticipationFit, ds: &Dataset) -> Result<(Vec<Vec<f64>>, Option<Vec<f64>>)> {
    let x = participation_design(ds, &fit.extra);
    let control = match fit.estimator {
        Estimator::Probit | Estimator::CfJointMle => None,
        Estimator::CfTwostep => {
            let (Some(theta), Some(fs_extra)) = (&fit.first_stage_theta, &fit.first_stage_extra) else {
                return Err(Error::invalid("two-step fit lacks its first stage"));
            };
            let w = belief_design(ds, fs_extra);
            let e = DVector::from_column_slice(ds.delta_b()) - w * DVector::from_column_slice(theta);
            Some(e.iter().copied().collect())
        }
        Estimator::NeweyMinchi2 => {
            return Err(Error::invalid(
                "margins are not defined for the variance-normalized minimum chi-squared estimates",
            ))
        }
    };
    let rows = (0..ds.len()).map(|i| x.row(i).iter().copied().collect()).collect();
    Ok((rows, control))
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows.first().map_or(0, |r| r.len());
    let n = rows.len() as f64;
    (0..k).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

impl StructuralFunctional {
    fn build(fit: &ParticipationFit, ds: &Dataset, at: ApePoint, quantity: Quantity) -> Result<Self> {
        let (rows, control) = index_rows(fit, ds)?;
        if rows.is_empty() {
            return Err(Error::invalid("empty evaluation set"));
        }
        let mean_db = ds.delta_b().iter().sum::<f64>() / ds.len() as f64;
        let (rows, control, at) = match at {
            ApePoint::Overall => (rows, control, None),
            ApePoint::AtMeans => {
                let c = control.map(|e| vec![e.iter().sum::<f64>() / e.len() as f64]);
                (vec![column_means(&rows)], c, None)
            }
            ApePoint::AtPre => (rows, control, Some(0.0)),
            ApePoint::AtPost => (rows, control, Some(mean_db)),
            ApePoint::At(d) => (rows, control, Some(d)),
        };
        Ok(StructuralFunctional {
            rows,
            control,
            dim: fit.params.len(),
            at,
            quantity,
        })
    }

    /// Predicted participation probability at `at`.
    pub fn margin(fit: &ParticipationFit, ds: &Dataset, at: ApePoint) -> Result<Self> {
        Self::build(fit, ds, at, Quantity::Margin)
    }

    /// Average partial effect of the belief change at `at`.
    pub fn ape(fit: &ParticipationFit, ds: &Dataset, at: ApePoint) -> Result<Self> {
        Self::build(fit, ds, at, Quantity::Ape)
    }
}

/// Where a margin or partial effect is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApePoint {
    /// Observed belief changes and covariates.
    Overall,
    /// All regressors at their sample means.
    AtMeans,
    /// No belief change, averaged over covariates.
    AtPre,
    /// The sample-mean belief change, averaged over covariates.
    AtPost,
    /// A fixed belief change, averaged over covariates.
    At(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMargin {
    pub delta_b: f64,
    #[serde(flatten)]
    pub value: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginTable {
    pub overall: Estimate,
    pub at_means: Estimate,
    pub at_grid: Vec<GridMargin>,
}

#[allow(clippy::upper_case_acronyms)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct APETable {
    pub overall: Estimate,
    pub at_means: Estimate,
    pub at_pre: Estimate,
    pub at_post: Estimate,
}

/// Predictive margins with delta-method standard errors.
pub fn predictive_margins(fit: &ParticipationFit, ds: &Dataset, grid: &[f64]) -> Result<MarginTable> {
    let m = |at| -> Result<Estimate> { Ok(delta_method(fit, &StructuralFunctional::margin(fit, ds, at)?).value) };
    Ok(MarginTable {
        overall: m(ApePoint::Overall)?,
        at_means: m(ApePoint::AtMeans)?,
        at_grid: grid
            .iter()
            .map(|&d| {
                Ok(GridMargin {
                    delta_b: d,
                    value: m(ApePoint::At(d))?,
                })
            })
            .collect::<Result<_>>()?,
    })
}

/// Average partial effect of the belief change with its delta-method error.
pub fn ape(fit: &ParticipationFit, ds: &Dataset, at: ApePoint) -> Result<Estimate> {
    Ok(delta_method(fit, &StructuralFunctional::ape(fit, ds, at)?).value)
}

pub fn ape_table(fit: &ParticipationFit, ds: &Dataset) -> Result<APETable> {
    Ok(APETable {
        overall: ape(fit, ds, ApePoint::Overall)?,
        at_means: ape(fit, ds, ApePoint::AtMeans)?,
        at_pre: ape(fit, ds, ApePoint::AtPre)?,
        at_post: ape(fit, ds, ApePoint::AtPost)?,
    })
}
