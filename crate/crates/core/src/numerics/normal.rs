use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal cumulative distribution function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

// Phi(-t)/phi(t) for large t by the Laplace continued fraction.
fn upper_tail_ratio(t: f64) -> f64 {
    let mut acc = t;
    for k in (1..=80).rev() {
        acc = t + k as f64 / acc;
    }
    1.0 / acc
}

/// `phi(x) / Phi(x)`, stable in the far left tail.
pub fn inverse_mills(x: f64) -> f64 {
    if x > -8.0 {
        std_normal_pdf(x) / std_normal_cdf(x)
    } else {
        1.0 / upper_tail_ratio(-x)
    }
}

/// `ln Phi(x)` without underflow for very negative `x`.
pub fn log_std_normal_cdf(x: f64) -> f64 {
    if x > 5.0 {
        (-std_normal_cdf(-x)).ln_1p()
    } else if x > -8.0 {
        std_normal_cdf(x).ln()
    } else {
        -0.5 * x * x - 0.5 * (2.0 * PI).ln() + upper_tail_ratio(-x).ln()
    }
}

/// Log-likelihood contribution `y ln Phi(t) + (1 - y) ln Phi(-t)` of a
/// probit index `t` for a response `y` in `[0, 1]`, with its first and
/// second derivatives in `t`.
pub fn probit_terms(y: f64, t: f64) -> (f64, f64, f64) {
    let mut ll = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    if y > 0.0 {
        let l = inverse_mills(t);
        ll += y * log_std_normal_cdf(t);
        d1 += y * l;
        d2 -= y * l * (t + l);
    }
    if y < 1.0 {
        let l = inverse_mills(-t);
        ll += (1.0 - y) * log_std_normal_cdf(-t);
        d1 -= (1.0 - y) * l;
        d2 -= (1.0 - y) * l * (l - t);
    }
    (ll, d1, d2)
}

/// Two-sided tail probability of a standard normal statistic, capped at one.
pub fn two_sided_normal_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    (2.0 * std_normal_cdf(-z.abs())).min(1.0)
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation followed by one Halley refinement step,
/// which brings the relative error to roughly machine precision.
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let plow = 0.024_25;
    let x = if p < plow {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = std_normal_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}
