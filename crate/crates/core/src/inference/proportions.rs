use super::TestResult;
use crate::error::{Error, Result};
use crate::numerics::two_sided_normal_p;
use statrs::distribution::{Binomial, Discrete};

/// Exact two-sided binomial test of `p = p0`. The p-value sums the
/// probabilities of all outcomes no more likely than the observed one,
/// with a relative tolerance of `1e-7` for ties.
pub fn binomial_test(successes: u64, trials: u64, p0: f64) -> Result<TestResult> {
    if trials == 0 || successes > trials {
        return Err(Error::invalid(format!("binomial test: {successes} successes in {trials} trials")));
    }
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::invalid(format!("binomial test: p0 = {p0} outside [0, 1]")));
    }
    let dist = Binomial::new(p0, trials).map_err(|e| Error::invalid(e.to_string()))?;
    let observed = dist.pmf(successes);
    let cutoff = observed * (1.0 + 1e-7);
    let p: f64 = (0..=trials).map(|k| dist.pmf(k)).filter(|&q| q <= cutoff).sum();
    let mut t = TestResult::new(successes as f64, None, p.min(1.0), "binomial exact (minimum likelihood)");
    t = t.note(format!("expected {:.2} successes", p0 * trials as f64));
    Ok(t)
}

/// Pooled two-sample z-test of equal proportions.
pub fn two_proportion_test(s1: u64, n1: u64, s2: u64, n2: u64) -> Result<TestResult> {
    if n1 == 0 || n2 == 0 || s1 > n1 || s2 > n2 {
        return Err(Error::invalid(format!("proportion test: {s1}/{n1} vs {s2}/{n2}")));
    }
    let (p1, p2) = (s1 as f64 / n1 as f64, s2 as f64 / n2 as f64);
    let pooled = (s1 + s2) as f64 / (n1 + n2) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    let z = if se > 0.0 { (p1 - p2) / se } else { 0.0 };
    let mut t = TestResult::new(z, None, two_sided_normal_p(z), "two-proportion z (pooled)");
    t.z = Some(z);
    Ok(t)
}
