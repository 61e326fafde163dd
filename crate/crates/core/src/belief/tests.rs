use super::*;
use crate::domain::{validate_dataset, LocationSignal, SubjectRecord};
use crate::numerics::RandomStream;
use rand_distr::{Beta, Distribution};

/// Dataset from `(z, c, delta_b)` triples; signal .5, beliefs centred on .5.
pub(crate) fn cells(rows: &[(u8, u8, f64)]) -> Dataset {
    let recs = rows
        .iter()
        .enumerate()
        .map(|(i, &(z, c, d))| SubjectRecord {
            subject_id: format!("r{i}"),
            location: "L".into(),
            enroll_date: "e".into(),
            treat_date: "t".into(),
            b_prior: 0.5 - d / 2.0,
            b_post: 0.5 + d / 2.0,
            b_ref: if c == 1 { 0.7 } else { 0.2 },
            z,
            a: (i % 2) as u8,
            raw_outcome_code: None,
            covariates: vec![],
        })
        .collect();
    validate_dataset(recs, vec![LocationSignal { location: "L".into(), s: 0.5 }]).unwrap()
}

fn opts() -> BeliefOptions {
    BeliefOptions::default()
}

#[test]
fn zero_change_gives_zero_coefficients() {
    let ds = cells(&[(0, 0, 0.0), (1, 0, 0.0), (0, 1, 0.0), (1, 1, 0.0), (1, 1, 0.0), (0, 0, 0.0)]);
    let fit = fit_ols_belief(&ds, &opts()).unwrap();
    assert!(fit.theta_hat.iter().all(|&t| t == 0.0));
    let fp = fit_fractional_probit(&ds, &opts()).unwrap();
    assert!(fp.theta_hat[0].abs() < 1e-12);
    assert!((std_normal_cdf(fp.theta_hat[0]) - 0.5).abs() < 1e-12);
}

#[test]
fn saturated_ols_equals_cell_mean_contrasts() {
    let (m00, m10, m01, m11) = (0.03, 0.11, -0.02, -0.09);
    let ds = cells(&[(0, 0, m00), (1, 0, m10), (0, 1, m01), (1, 1, m11)]);
    let fit = fit_ols_belief(&ds, &opts()).unwrap();
    let oracle = [m00, m10 - m00, m01 - m00, m11 - m01 - m10 + m00];
    for (a, b) in fit.theta_hat.iter().zip(oracle) {
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }
    assert!(!fit.warnings.is_empty());
    let e = residuals(&fit, &ds).unwrap();
    assert!(e.residuals.iter().all(|r| r.abs() < 1e-14));
}

#[test]
fn saturated_fractional_probit_matches_cell_means() {
    let rows = [
        (0, 0, 0.05),
        (0, 0, -0.01),
        (1, 0, 0.2),
        (1, 0, 0.1),
        (0, 1, 0.0),
        (0, 1, -0.3),
        (1, 1, -0.25),
        (1, 1, 0.05),
    ];
    let ds = cells(&rows);
    let fit = fit_fractional_probit(&ds, &opts()).unwrap();
    let th = &fit.theta_hat;
    let idx = |z: u8, c: u8| th[0] + th[1] * z as f64 + th[2] * c as f64 + th[3] * (z * c) as f64;
    for z in 0..2u8 {
        for c in 0..2u8 {
            let ys: Vec<f64> = rows.iter().filter(|r| r.0 == z && r.1 == c).map(|r| (r.2 + 1.0) / 2.0).collect();
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            assert!((std_normal_cdf(idx(z, c)) - mean).abs() < 1e-8);
        }
    }
    // saturated: retransformed effects equal the OLS contrasts
    let ols = ate_by_group(&fit_ols_belief(&ds, &opts()).unwrap());
    let fp = ate_by_group_retransformed(&fit);
    assert!((ols.below.estimate - fp.below.estimate).abs() < 1e-8);
    assert!((ols.above.estimate - fp.above.estimate).abs() < 1e-8);
}

#[test]
fn constant_treatment_is_named() {
    let ds = cells(&[(1, 0, 0.1), (1, 1, 0.0), (1, 0, 0.2), (1, 1, -0.1), (1, 0, 0.05)]);
    match fit_ols_belief(&ds, &opts()) {
        Err(Error::RankDeficient(name)) => assert!(name.starts_with('z')),
        other => panic!("{other:?}"),
    }
    assert!(matches!(fit_fractional_probit(&ds, &opts()), Err(Error::RankDeficient(_))));
}

fn noisy(n: usize, seed: u64) -> Dataset {
    use rand::Rng;
    let mut rng = RandomStream::new(seed, 0).rng();
    let rows: Vec<(u8, u8, f64)> = (0..n)
        .map(|_| {
            let z = rng.random_bool(2.0 / 3.0) as u8;
            let c = rng.random_bool(0.45) as u8;
            let mean = 0.0071 + 0.0425 * z as f64 - 0.0003 * c as f64 - 0.0979 * (z * c) as f64;
            let e: f64 = rand_distr::Normal::new(0.0, 0.1379).unwrap().sample(&mut rng);
            (z, c, (mean + e).clamp(-0.49, 0.49))
        })
        .collect();
    cells(&rows)
}

#[test]
fn linear_ate_identities_and_exact_standard_errors() {
    let ds = noisy(400, 3);
    let fit = fit_ols_belief(&ds, &opts()).unwrap();
    let ate = ate_by_group(&fit);
    let th = &fit.theta_hat;
    let v = &fit.covariance;
    assert_eq!(ate.below.estimate, th[1]);
    assert!((ate.above.estimate - (th[1] + th[3])).abs() < 1e-15);
    assert!((ate.below.se - v[(1, 1)].sqrt()).abs() < 1e-15);
    let se_above = (v[(1, 1)] + v[(3, 3)] + 2.0 * v[(1, 3)]).sqrt();
    assert!((ate.above.se - se_above).abs() < 1e-15);
    assert!(ate.below.p >= 0.0 && ate.below.p <= 1.0);
}

#[test]
fn residuals_are_orthogonal_to_regressors() {
    let ds = noisy(300, 5);
    let fit = fit_ols_belief(&ds, &opts()).unwrap();
    let e = residuals(&fit, &ds).unwrap();
    let w = belief_design(&ds, &fit.extra);
    for j in 0..4 {
        let dot: f64 = w.column(j).iter().zip(&e.residuals).map(|(a, b)| a * b).sum();
        assert!(dot.abs() <= 1e-8 * ds.len() as f64);
    }
    let mean = e.residuals.iter().sum::<f64>() / e.residuals.len() as f64;
    assert!(mean.abs() < 1e-10);
}

#[test]
fn residuals_need_linear_link() {
    let ds = noisy(100, 9);
    let fp = fit_fractional_probit(&ds, &opts()).unwrap();
    assert!(matches!(residuals(&fp, &ds), Err(Error::LinkMismatch(_))));
}

#[test]
fn fractional_covariance_options() {
    let ds = noisy(300, 11);
    let sandwich = fit_fractional_probit(&ds, &opts()).unwrap();
    let oim = fit_fractional_probit(
        &ds,
        &BeliefOptions {
            fp_covariance: FpCovariance::ObservedInformation,
            ..opts()
        },
    )
    .unwrap();
    assert_eq!(sandwich.theta_hat, oim.theta_hat);
    // quasi-likelihood on a narrow response: information badly overstates
    // the variance relative to the sandwich
    assert!(oim.covariance[(1, 1)] > sandwich.covariance[(1, 1)]);
}

#[test]
fn beta_scale_recovery() {
    let ln_phi: f64 = 3.874;
    let phi = ln_phi.exp();
    let dist = Beta::new(0.5 * phi, 0.5 * phi).unwrap();
    let mut rng = RandomStream::new(21, 0).rng();
    let rows: Vec<(u8, u8, f64)> = (0..1510)
        .map(|i| ((i % 2) as u8, ((i / 2) % 2) as u8, 2.0 * dist.sample(&mut rng) - 1.0))
        .collect();
    let fit = fit_beta_regression(&cells(&rows), &opts()).unwrap();
    let s = fit.scale_hat.unwrap();
    assert!((s - ln_phi).abs() / ln_phi < 0.10, "scale {s}");
    assert!(fit.theta_hat[0].abs() < 0.05);
}

#[test]
fn beta_constant_response_is_degenerate() {
    let ds = cells(&[(0, 0, 0.0), (1, 0, 0.0), (0, 1, 0.0), (1, 1, 0.0), (1, 0, 0.0)]);
    let fit = fit_beta_regression(&ds, &opts()).unwrap();
    assert_eq!(fit.theta_hat[0], 0.0);
    assert!(fit.warnings.iter().any(|w| w.contains("degenerate scale")));
}

#[test]
fn beta_boundary_policy() {
    let ds = cells(&[(0, 0, -1.0), (1, 0, 0.1), (0, 1, 0.0), (1, 1, -0.2), (1, 0, 0.3), (0, 1, 0.05)]);
    let reject = BeliefOptions {
        boundary: BoundaryPolicy::Reject,
        ..opts()
    };
    assert!(fit_beta_regression(&ds, &reject).is_err());
    let fit = fit_beta_regression(&ds, &opts()).unwrap();
    assert!(fit.warnings.iter().any(|w| w.contains("shrunk")));
}
