use crate::error::{Error, Result};
use crate::numerics::std_normal_cdf;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    /// The fixed point (the smallest one when there are several).
    pub b_star: f64,
    /// Every fixed point found in `[0, 1]`, ascending.
    pub fixed_points: Vec<f64>,
    pub iterations: usize,
    /// `|Phi(alpha + beta b_star) - b_star|`.
    pub residual: f64,
    pub unique: bool,
}

fn excess(alpha: f64, beta: f64, b: f64) -> f64 {
    std_normal_cdf(alpha + beta * b) - b
}

/// Bisection on a bracket with `excess(lo) >= 0 >= excess(hi)` or the
/// reverse. Stops once the bracket is far below `tol` wide.
fn bisect(alpha: f64, beta: f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, usize) {
    let f_lo = excess(alpha, beta, lo);
    let mut it = 0;
    while hi - lo > tol * 1e-3 && it < 200 {
        let mid = 0.5 * (lo + hi);
        let f = excess(alpha, beta, mid);
        it += 1;
        if f == 0.0 {
            return (mid, it);
        }
        if (f > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi), it)
}

/// Mean-belief fixed points `b = Phi(alpha + beta b)` of the participation
/// game. For `beta <= 0` the map is non-increasing and the fixed point is
/// unique; for `beta > 0` all sign changes on a fine grid are refined.
pub fn solve_equilibrium(alpha: f64, beta: f64, tol: f64) -> Result<EquilibriumResult> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    if !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::invalid("alpha and beta must be finite"));
    }
    if beta == 0.0 {
        let b = std_normal_cdf(alpha);
        return Ok(EquilibriumResult {
            b_star: b,
            fixed_points: vec![b],
            iterations: 0,
            residual: 0.0,
            unique: true,
        });
    }
    let mut roots = Vec::new();
    let mut iterations = 0;
    if beta < 0.0 {
        let (b, it) = bisect(alpha, beta, 0.0, 1.0, tol);
        roots.push(b);
        iterations = it;
    } else {
        const GRID: usize = 2000;
        let mut prev = (0.0, excess(alpha, beta, 0.0));
        if prev.1 == 0.0 {
            roots.push(0.0);
        }
        for k in 1..=GRID {
            let b = k as f64 / GRID as f64;
            let f = excess(alpha, beta, b);
            if f == 0.0 {
                roots.push(b);
            } else if prev.1 != 0.0 && (f > 0.0) != (prev.1 > 0.0) {
                let (r, it) = bisect(alpha, beta, prev.0, b, tol);
                roots.push(r);
                iterations += it;
            }
            prev = (b, f);
        }
    }
    let b_star = roots[0];
    Ok(EquilibriumResult {
        b_star,
        residual: excess(alpha, beta, b_star).abs(),
        unique: roots.len() == 1,
        fixed_points: roots,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeRidingOffset {
    pub b_star_old: f64,
    pub b_star_new: f64,
    /// Participation response holding others' behaviour fixed.
    pub naive_response: f64,
    /// Response once the mean belief re-equilibrates.
    pub equilibrium_response: f64,
    /// Share of the naive response undone by the equilibrium adjustment.
    pub offset_share: f64,
}

/// Compares the direct response to a shift `alpha_shift` in the
/// participation index with the equilibrium response. Only the unique
/// equilibrium regime `beta < 0` is supported.
pub fn free_riding_offset(alpha: f64, alpha_shift: f64, beta: f64) -> Result<FreeRidingOffset> {
    if !(beta < 0.0) {
        return Err(Error::invalid(format!(
            "beta = {beta} is not negative; with complementarities there can be several equilibria, \
             use solve_equilibrium and compare fixed points directly"
        )));
    }
    if alpha_shift == 0.0 {
        return Err(Error::invalid("alpha_shift must be nonzero"));
    }
    let tol = 1e-13;
    let old = solve_equilibrium(alpha, beta, tol)?.b_star;
    let new = solve_equilibrium(alpha + alpha_shift, beta, tol)?.b_star;
    let naive = std_normal_cdf(alpha + alpha_shift + beta * old) - std_normal_cdf(alpha + beta * old);
    let eq = new - old;
    Ok(FreeRidingOffset {
        b_star_old: old,
        b_star_new: new,
        naive_response: naive,
        equilibrium_response: eq,
        offset_share: 1.0 - eq / naive,
    })
}
