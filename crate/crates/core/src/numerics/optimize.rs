use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::inverse_spd;

/// A smooth log-likelihood to be maximized.
///
/// Implementors supply the analytic score. The Hessian defaults to central
/// differences of the score, which is accurate to about 1e-9 relative for
/// the likelihoods in this crate.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, params: &[f64]) -> f64;
    fn gradient(&self, params: &[f64]) -> Vec<f64>;

    fn hessian(&self, params: &[f64]) -> DMatrix<f64> {
        numeric_hessian(|p| self.gradient(p), params)
    }
}

/// Symmetrized central-difference Jacobian of a gradient map.
pub fn numeric_hessian<G>(grad: G, params: &[f64]) -> DMatrix<f64>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let k = params.len();
    let mut h = DMatrix::zeros(k, k);
    let mut x = params.to_vec();
    for j in 0..k {
        let step = 1e-5 * params[j].abs().max(1.0);
        let orig = x[j];
        x[j] = orig + step;
        let up = grad(&x);
        x[j] = orig - step;
        let down = grad(&x);
        x[j] = orig;
        for i in 0..k {
            h[(i, j)] = (up[i] - down[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Adapter turning a pair of closures into an [`Objective`].
pub struct FnObjective<F, G> {
    pub dim: usize,
    pub value: F,
    pub gradient: G,
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, params: &[f64]) -> f64 {
        (self.value)(params)
    }
    fn gradient(&self, params: &[f64]) -> Vec<f64> {
        (self.gradient)(params)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OptOptions {
    /// Convergence threshold on the gradient infinity norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OptOptions {
    fn default() -> Self {
        OptOptions {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptStatus {
    Converged,
    MaxIterations,
    /// The score vanished along a direction in which the likelihood keeps
    /// rising or stays flat: the maximizer does not exist or is not unique.
    Diverging,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub argmax: Vec<f64>,
    pub loglik: f64,
    /// Inverse negative Hessian at `argmax`; `None` when that matrix is not
    /// positive definite.
    pub covariance: Option<DMatrix<f64>>,
    pub converged: bool,
    pub status: OptStatus,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl OptResult {
    pub fn require_converged(self, what: &str) -> Result<OptResult> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged(format!(
                "{what}: {:?} after {} iterations (|grad|_inf = {:.3e})",
                self.status, self.iterations, self.gradient_norm
            )))
        }
    }

    pub fn require_covariance(&self, what: &str) -> Result<DMatrix<f64>> {
        self.covariance
            .clone()
            .ok_or_else(|| Error::Singular(format!("{what}: negative Hessian not invertible")))
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Newton ascent with backtracking line search.
///
/// When the negative Hessian is not positive definite the step falls back to
/// a Levenberg-damped system `(-H + mu I) d = g`, increasing `mu` until the
/// factorization succeeds. Convergence requires the score infinity norm to
/// be at most `tol` and the Newton step at that point to be negligible;
/// a vanishing score with a large or undefined Newton step is reported as
/// [`OptStatus::Diverging`].
pub fn maximize_loglik<O: Objective + ?Sized>(
    objective: &O,
    init: &[f64],
    opts: &OptOptions,
) -> Result<OptResult> {
    if init.len() != objective.dim() {
        return Err(Error::invalid(format!(
            "initial vector has length {}, objective expects {}",
            init.len(),
            objective.dim()
        )));
    }
    let mut p = init.to_vec();
    let mut f = objective.value(&p);
    if !f.is_finite() {
        return Err(Error::invalid("objective is not finite at the initial point"));
    }

    let mut status = OptStatus::MaxIterations;
    let mut iterations = 0;
    let mut g = objective.gradient(&p);
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let gnorm = inf_norm(&g);
        let neg_h = -objective.hessian(&p);
        let gv = DVector::from_column_slice(&g);

        let (direction, pure_newton) = match neg_h.clone().cholesky() {
            Some(ch) => (ch.solve(&gv), true),
            None => {
                let scale = neg_h.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let mut mu = (scale * 1e-6).max(1e-8);
                loop {
                    let damped = &neg_h + DMatrix::identity(p.len(), p.len()) * mu;
                    if let Some(ch) = damped.cholesky() {
                        break (ch.solve(&gv), false);
                    }
                    mu *= 10.0;
                    if !mu.is_finite() {
                        break (gv.clone(), false);
                    }
                }
            }
        };
        let step_norm = inf_norm(direction.as_slice());

        if gnorm <= opts.tol {
            let negligible = step_norm <= 1e-6 * (1.0 + inf_norm(&p));
            status = if pure_newton && negligible {
                OptStatus::Converged
            } else {
                OptStatus::Diverging
            };
            break;
        }
        if inf_norm(&p) > 1e8 {
            status = OptStatus::Diverging;
            break;
        }

        let slope = gv.dot(&direction);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-14 {
            let trial: Vec<f64> = p.iter().zip(direction.iter()).map(|(a, d)| a + t * d).collect();
            let ft = objective.value(&trial);
            if ft.is_finite() {
                let armijo = ft >= f + 1e-4 * t * slope;
                // at full Newton steps near the optimum the improvement can
                // fall below the rounding level of the objective
                let flat_ok = t == 1.0 && pure_newton && ft >= f - 1e-12 * (1.0 + f.abs());
                if armijo || flat_ok {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, ft)) => {
                p = trial;
                f = ft;
                g = objective.gradient(&p);
            }
            None => {
                status = OptStatus::LineSearchFailed;
                break;
            }
        }
    }

    let gradient_norm = inf_norm(&g);
    if status == OptStatus::MaxIterations && gradient_norm <= opts.tol {
        status = OptStatus::Converged;
    }
    let covariance = inverse_spd(&(-objective.hessian(&p)));
    Ok(OptResult {
        argmax: p,
        loglik: f,
        covariance,
        converged: status == OptStatus::Converged,
        status,
        iterations,
        gradient_norm,
    })
}
