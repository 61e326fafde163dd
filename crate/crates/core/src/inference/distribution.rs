use super::{chi2_sf, TestResult};
use crate::error::{Error, Result};
use crate::numerics::{maximize_loglik, FnObjective, OptOptions};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::gamma::digamma;
use std::f64::consts::PI;

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Kolmogorov survival function `P(K > lambda)`.
pub(crate) fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-transformed series converges fast for small lambda
        let y = -PI * PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=20).map(|k| ((2 * k - 1) as f64).powi(2) * y).map(f64::exp).sum();
        (1.0 - (2.0 * PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Scaled two-sample statistic `max |i m - j n|` over the merged order.
fn two_sample_d(a: &[f64], b: &[f64]) -> i64 {
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut best) = (0usize, 0usize, 0i64);
    while i < n || j < m {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        while i < n && a[i] == x {
            i += 1;
        }
        while j < m && b[j] == x {
            j += 1;
        }
        best = best.max((i as i64 * m as i64 - j as i64 * n as i64).abs());
    }
    best
}

/// `P(D >= d)` under the null for continuous data: one minus the share of
/// monotone lattice paths that stay strictly inside the band.
fn two_sample_exact_p(n: usize, m: usize, d_scaled: i64) -> f64 {
    let inside = |i: usize, j: usize| (i as i64 * m as i64 - j as i64 * n as i64).abs() < d_scaled;
    let mut paths = vec![vec![0.0f64; m + 1]; n + 1];
    for i in 0..=n {
        for j in 0..=m {
            if !inside(i, j) {
                continue;
            }
            paths[i][j] = if i == 0 && j == 0 {
                1.0
            } else {
                (if i > 0 { paths[i - 1][j] } else { 0.0 }) + (if j > 0 { paths[i][j - 1] } else { 0.0 })
            };
        }
    }
    let total: f64 = (1..=n).fold(1.0, |acc, k| acc * (m + k) as f64 / k as f64);
    (1.0 - paths[n][m] / total).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test. The p-value is exact when the
/// smaller sample has at most 10 points and asymptotic otherwise.
pub fn ks_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("KS test needs two nonempty samples"));
    }
    let (sa, sb) = (sorted(a), sorted(b));
    let (n, m) = (a.len(), b.len());
    let ds = two_sample_d(&sa, &sb);
    let d = ds as f64 / (n * m) as f64;
    if n.min(m) <= 10 {
        let p = if ds == 0 { 1.0 } else { two_sample_exact_p(n, m, ds) };
        Ok(TestResult::new(d, None, p, "ks two-sample (exact)"))
    } else {
        let en = ((n * m) as f64 / (n + m) as f64).sqrt();
        let p = kolmogorov_sf((en + 0.12 + 0.11 / en) * d);
        Ok(TestResult::new(d, None, p, "ks two-sample (asymptotic)"))
    }
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF, with the
/// small-sample corrected asymptotic p-value.
pub fn ks_test_one_sample(x: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    if x.is_empty() {
        return Err(Error::invalid("KS test needs a nonempty sample"));
    }
    let s = sorted(x);
    let n = s.len() as f64;
    let d = s.iter().enumerate().fold(0.0f64, |acc, (i, &v)| {
        let f = cdf(v);
        acc.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    });
    let en = n.sqrt();
    let p = kolmogorov_sf((en + 0.12 + 0.11 / en) * d);
    Ok(TestResult::new(d, None, p, "ks one-sample (asymptotic)"))
}

/// Kruskal-Wallis rank test with the ties correction.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestResult> {
    if groups.len() < 2 || groups.iter().any(|g| g.is_empty()) {
        return Err(Error::invalid("Kruskal-Wallis needs at least two nonempty groups"));
    }
    let mut pooled: Vec<(f64, usize)> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, v)| v.iter().map(move |&x| (x, g)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let big_n = pooled.len() as f64;
    let mut rank_sums = vec![0.0; groups.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let mid = (i + j + 1) as f64 / 2.0;
        for p in &pooled[i..j] {
            rank_sums[p.1] += mid;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    let df = groups.len() - 1;
    let correction = 1.0 - ties / (big_n * big_n * big_n - big_n);
    if correction <= 0.0 {
        return Ok(TestResult::new(0.0, Some(df), 1.0, "kruskal-wallis").note("all values tied"));
    }
    let h0 = 12.0 / (big_n * (big_n + 1.0))
        * rank_sums.iter().zip(groups).map(|(r, g)| r * r / g.len() as f64).sum::<f64>()
        - 3.0 * (big_n + 1.0);
    let h = (h0 / correction).max(0.0);
    let mut t = TestResult::new(h, Some(df), chi2_sf(h, df), "kruskal-wallis");
    if ties > 0.0 {
        t = t.note("ties correction applied");
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub shape_a: f64,
    pub shape_b: f64,
    pub se_a: f64,
    pub se_b: f64,
    pub loglik: f64,
    /// One-sample KS test of the sample against the fitted distribution.
    pub ks_against_fit: TestResult,
    pub notes: Vec<String>,
}

/// Maximum-likelihood fit of a beta distribution. Values at exactly 0 or 1
/// are shrunk towards one half, `(x (n - 1) + 0.5) / n`, with a note.
pub fn beta_mle(sample: &[f64]) -> Result<BetaFit> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::invalid("beta fit needs at least two values"));
    }
    if let Some(bad) = sample.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::invalid(format!("beta fit: value {bad} outside [0, 1]")));
    }
    let mut notes = Vec::new();
    let x: Vec<f64> = if sample.iter().any(|&v| v == 0.0 || v == 1.0) {
        notes.push("boundary values shrunk towards 0.5".to_string());
        sample.iter().map(|&v| (v * (n as f64 - 1.0) + 0.5) / n as f64).collect()
    } else {
        sample.to_vec()
    };
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    if var <= 0.0 {
        return Err(Error::invalid("beta fit: sample has no variation"));
    }
    let s_ln: f64 = x.iter().map(|v| v.ln()).sum();
    let s_ln1m: f64 = x.iter().map(|v| (1.0 - v).ln()).sum();

    // method-of-moments start on the log scale
    let common = (mean * (1.0 - mean) / var - 1.0).max(0.1);
    let init = [(mean * common).ln(), ((1.0 - mean) * common).ln()];
    let ll = |p: &[f64]| {
        let (a, b) = (p[0].exp(), p[1].exp());
        (a - 1.0) * s_ln + (b - 1.0) * s_ln1m - nf * ln_beta(a, b)
    };
    let obj = FnObjective {
        dim: 2,
        value: ll,
        gradient: |p: &[f64]| {
            let (a, b) = (p[0].exp(), p[1].exp());
            let ab = digamma(a + b);
            vec![a * (s_ln - nf * (digamma(a) - ab)), b * (s_ln1m - nf * (digamma(b) - ab))]
        },
    };
    let res = maximize_loglik(&obj, &init, &OptOptions::default())?.require_converged("beta fit")?;
    let cov = res.require_covariance("beta fit")?;
    let (a, b) = (res.argmax[0].exp(), res.argmax[1].exp());
    let ks = ks_test_one_sample(&x, |v| beta_reg(a, b, v.clamp(0.0, 1.0)))?;
    Ok(BetaFit {
        shape_a: a,
        shape_b: b,
        se_a: a * cov[(0, 0)].sqrt(),
        se_b: b * cov[(1, 1)].sqrt(),
        loglik: res.loglik,
        ks_against_fit: ks,
        notes,
    })
}
