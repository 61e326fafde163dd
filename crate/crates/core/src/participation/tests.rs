use super::*;
use crate::domain::{validate_dataset, LocationSignal, SubjectRecord};
use crate::numerics::{
    finite_diff_grad, log_std_normal_cdf, maximize_loglik, Objective, RandomStream,
};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Dataset from `(z, c, delta_b, a)` rows.
pub(crate) fn rows(data: &[(u8, u8, f64, u8)]) -> Dataset {
    let recs = data
        .iter()
        .enumerate()
        .map(|(i, &(z, c, d, a))| SubjectRecord {
            subject_id: format!("r{i}"),
            location: "L".into(),
            enroll_date: "e".into(),
            treat_date: "t".into(),
            b_prior: 0.5 - d / 2.0,
            b_post: 0.5 + d / 2.0,
            b_ref: if c == 1 { 0.7 } else { 0.2 },
            z,
            a,
            raw_outcome_code: None,
            covariates: vec![],
        })
        .collect();
    validate_dataset(recs, vec![LocationSignal { location: "L".into(), s: 0.5 }]).unwrap()
}

/// Endogenous two-equation draw with belief changes kept inside (-1, 1).
pub(crate) fn endogenous(n: usize, beta: f64, rho: f64, seed: u64) -> Dataset {
    let theta = [0.0071, 0.0425, -0.0003, -0.0979];
    let (alpha, sigma) = (-1.0855, 0.1375);
    let mut rng = RandomStream::new(seed, 0).rng();
    let data: Vec<(u8, u8, f64, u8)> = (0..n)
        .map(|_| {
            let z = rng.random_bool(2.0 / 3.0) as u8;
            let c = rng.random_bool(0.45) as u8;
            let e0: f64 = StandardNormal.sample(&mut rng);
            let v: f64 = StandardNormal.sample(&mut rng);
            let mean = theta[0] + theta[1] * z as f64 + theta[2] * c as f64 + theta[3] * (z * c) as f64;
            let d = mean + sigma * e0;
            let u = rho * e0 + (1.0 - rho * rho).sqrt() * v;
            let a = u8::from(alpha + beta * d + u > 0.0);
            (z, c, d, a)
        })
        .collect();
    rows(&data)
}

fn bare() -> ModelSpec {
    ModelSpec::bare()
}

fn probit_ll(d: &[f64], a: &[u8], alpha: f64, beta: f64) -> f64 {
    d.iter()
        .zip(a)
        .map(|(&d, &a)| {
            let t = alpha + beta * d;
            if a == 1 {
                log_std_normal_cdf(t)
            } else {
                log_std_normal_cdf(-t)
            }
        })
        .sum()
}

/// Zooming lattice search: a `(2 m + 1)^k` grid around the incumbent,
/// shrinking the step by 4 each round until it falls below `tol`.
fn lattice_max(f: impl Fn(&[f64]) -> f64, mut centre: Vec<f64>, mut step: f64, m: i64, tol: f64) -> Vec<f64> {
    let k = centre.len();
    while step > tol {
        let mut best = (f(&centre), centre.clone());
        let side = (2 * m + 1) as usize;
        let mut p = vec![0.0; k];
        for idx in 0..side.pow(k as u32) {
            let mut r = idx;
            for j in 0..k {
                p[j] = centre[j] + ((r % side) as i64 - m) as f64 * step;
                r /= side;
            }
            let v = f(&p);
            if v > best.0 {
                best = (v, p.clone());
            }
        }
        centre = best.1;
        step /= 4.0;
    }
    centre
}

#[test]
fn six_row_probit_matches_lattice_search() {
    let data = [
        (0, 0, -0.3, 1),
        (1, 0, -0.1, 0),
        (0, 1, 0.0, 1),
        (1, 1, 0.1, 0),
        (0, 0, 0.2, 0),
        (1, 0, 0.4, 1),
    ];
    let ds = rows(&data);
    let fit = fit_probit(&ds, &bare()).unwrap();
    let d = ds.delta_b().to_vec();
    let a = ds.outcome();
    let oracle = lattice_max(|p| probit_ll(&d, &a, p[0], p[1]), vec![0.0, 0.0], 0.25, 20, 1e-5);
    assert!((fit.alpha_hat - oracle[0]).abs() < 1e-3, "{} vs {}", fit.alpha_hat, oracle[0]);
    assert!((fit.beta_hat - oracle[1]).abs() < 1e-3, "{} vs {}", fit.beta_hat, oracle[1]);
    assert!((fit.loglik.unwrap() - probit_ll(&d, &a, oracle[0], oracle[1])).abs() < 1e-6);
}

#[test]
fn separated_outcome_is_reported() {
    let data = [(0, 0, -0.3, 1), (1, 0, -0.2, 1), (0, 1, -0.1, 1), (1, 1, 0.1, 0), (0, 0, 0.2, 0), (1, 1, 0.3, 0)];
    let ds = rows(&data);
    assert!(matches!(fit_probit(&ds, &bare()), Err(Error::Separation(_))));
    let one_class = rows(&[(0, 0, 0.1, 0), (1, 0, 0.2, 0), (0, 1, -0.1, 0)]);
    assert!(matches!(fit_probit(&one_class, &bare()), Err(Error::Separation(_))));
}

fn eight_rows() -> Vec<(u8, u8, f64, u8)> {
    vec![
        (0, 0, -0.21, 1),
        (1, 0, -0.05, 0),
        (0, 1, 0.02, 1),
        (1, 1, 0.11, 0),
        (0, 0, 0.17, 1),
        (1, 0, -0.12, 1),
        (0, 1, 0.25, 0),
        (1, 1, 0.31, 0),
    ]
}

#[test]
fn eight_row_joint_likelihood_matches_lattice_search() {
    // four parameters: slope on the belief change, first-stage mean,
    // ln sigma and atanh rho
    let data = eight_rows();
    let d: Vec<f64> = data.iter().map(|r| r.2).collect();
    let a: Vec<u8> = data.iter().map(|r| r.3).collect();
    let x = DMatrix::from_column_slice(8, 1, &d);
    let w = DMatrix::from_element(8, 1, 1.0);
    let lik = JointCfLikelihood::new(x, w, d.clone(), a);
    let mean = d.iter().sum::<f64>() / 8.0;
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0).sqrt();
    let init = vec![0.0, mean, sd.ln(), 0.0];
    let res = maximize_loglik(&lik, &init, &Default::default()).unwrap();
    assert!(res.converged);
    let oracle = lattice_max(|p| lik.value(p), init, 0.2, 7, 1e-5);
    for (j, (got, want)) in res.argmax.iter().zip(&oracle).enumerate() {
        assert!((got - want).abs() < 2e-3, "param {j}: {got} vs {want}");
    }
}

#[test]
fn joint_gradient_matches_finite_differences() {
    let ds = endogenous(200, -3.3, 0.45, 1);
    let extra = ExtraColumns::default();
    let lik = JointCfLikelihood::new(
        participation_design(&ds, &extra),
        crate::belief::belief_design(&ds, &extra),
        ds.delta_b().to_vec(),
        ds.outcome(),
    );
    for p in [
        vec![-1.0, -3.0, 0.01, 0.04, 0.0, -0.1, -2.0, 0.5],
        vec![0.3, 2.0, -0.02, 0.1, 0.05, 0.0, -1.5, -1.2],
        vec![-2.5, -8.0, 0.0, 0.0, 0.0, 0.0, -2.2, 2.0],
    ] {
        let g = lik.gradient(&p);
        let fd = finite_diff_grad(|q| lik.value(q), &p, 1e-6);
        for j in 0..p.len() {
            let tol = 1e-5 * (1.0 + g[j].abs());
            assert!((g[j] - fd[j]).abs() < tol, "component {j}: {} vs {}", g[j], fd[j]);
        }
    }
}

#[test]
fn joint_likelihood_factorizes_without_correlation() {
    let ds = endogenous(300, -2.0, 0.0, 2);
    let probit = fit_probit(&ds, &bare()).unwrap();
    let ols = crate::belief::fit_ols_belief(&ds, &Default::default()).unwrap();
    let n = ds.len() as f64;
    let sigma2 = ols.loglik_or_rss / n;
    let normal_ll = -0.5 * n * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
    let extra = ExtraColumns::default();
    let lik = JointCfLikelihood::new(
        participation_design(&ds, &extra),
        crate::belief::belief_design(&ds, &extra),
        ds.delta_b().to_vec(),
        ds.outcome(),
    );
    let mut p = vec![probit.alpha_hat, probit.beta_hat];
    p.extend_from_slice(&ols.theta_hat);
    p.push(0.5 * sigma2.ln());
    p.push(0.0);
    let joint = lik.value(&p);
    assert!((joint - (probit.loglik.unwrap() + normal_ll)).abs() < 1e-6);
    // the separate fits are the constrained optimum at rho = 0
    let g = lik.gradient(&p);
    assert!(g[..p.len() - 1].iter().all(|v| v.abs() < 1e-5), "{g:?}");
}

#[test]
fn scores_vanish_at_the_optimum() {
    let ds = endogenous(600, -3.3, 0.45, 3);
    let joint = fit_cf_joint_mle(&ds, &bare()).unwrap();
    let extra = ExtraColumns::default();
    let lik = JointCfLikelihood::new(
        participation_design(&ds, &extra),
        crate::belief::belief_design(&ds, &extra),
        ds.delta_b().to_vec(),
        ds.outcome(),
    );
    let fd = finite_diff_grad(|q| lik.value(q), &joint.params, 1e-6);
    assert!(fd.iter().all(|v| v.abs() < 1e-4), "{fd:?}");
    assert!(lik.gradient(&joint.params).iter().all(|v| v.abs() <= 1e-6));
    let probit = fit_probit(&ds, &bare()).unwrap();
    let plik = crate::belief::FractionalProbitLikelihood::new(
        participation_design(&ds, &extra),
        ds.outcome().iter().map(|&v| v as f64).collect(),
    );
    assert!(plik.gradient(&probit.params).iter().all(|v| v.abs() <= 1e-6));
}

#[test]
fn joint_dominates_twostep_at_shared_parameters() {
    let ds = endogenous(800, -3.3, 0.45, 4);
    let two = fit_cf_twostep(&ds, &bare()).unwrap();
    let joint = fit_cf_joint_mle(&ds, &bare()).unwrap();
    let extra = ExtraColumns::default();
    let lik = JointCfLikelihood::new(
        participation_design(&ds, &extra),
        crate::belief::belief_design(&ds, &extra),
        ds.delta_b().to_vec(),
        ds.outcome(),
    );
    let implied = twostep_implied_joint(&two).unwrap();
    assert!(joint.loglik.unwrap() >= lik.value(&implied) - 1e-9);
    assert_eq!(joint.beta_hat.signum(), two.beta_hat.signum());
    assert!((two.beta_hat - joint.beta_hat).abs() <= 0.25 * joint.beta_hat.abs());
    let rho = joint.rho_hat.unwrap();
    assert!(rho.abs() < 1.0);
    let cov = &joint.covariance;
    assert!((cov - cov.transpose()).abs().max() < 1e-12);
    assert!(cov.clone().symmetric_eigenvalues().iter().all(|&l| l > 0.0));
}

#[test]
fn twostep_needs_a_nonzero_control() {
    let ds = rows(&[(0, 0, 0.1, 1), (1, 0, 0.2, 0), (0, 1, -0.1, 0), (1, 1, 0.05, 1)]);
    assert!(matches!(fit_cf_twostep(&ds, &bare()), Err(Error::RankDeficient(_))));
}

#[test]
fn without_endogeneity_the_estimators_agree() {
    let ds = endogenous(1500, -3.0, 0.0, 5);
    let p = fit_probit(&ds, &bare()).unwrap();
    let t = fit_cf_twostep(&ds, &bare()).unwrap();
    let j = fit_cf_joint_mle(&ds, &bare()).unwrap();
    let eta_se = t.covariance[(2, 2)].sqrt();
    assert!(t.eta_hat.unwrap().abs() < 3.0 * eta_se);
    for (x, y) in [(&p, &t), (&p, &j), (&t, &j)] {
        let se = (x.beta().se.powi(2) + y.beta().se.powi(2)).sqrt();
        assert!((x.beta_hat - y.beta_hat).abs() < 2.0 * se);
    }
}

#[test]
fn newey_has_the_planted_sign_and_no_margins() {
    let ds = endogenous(1510, -3.3062, 0.4519, 6);
    let fit = fit_newey_minchi2(&ds, &bare()).unwrap();
    assert!(fit.beta_hat < 0.0);
    assert!(fit.beta().p < 0.05);
    assert!(predictive_margins(&fit, &ds, &[0.0]).is_err());
}

#[test]
fn delta_method_linear_and_identity() {
    let ds = endogenous(500, -3.0, 0.3, 7);
    let fit = fit_probit(&ds, &bare()).unwrap();
    let id = delta_method(&fit, &LinearFunctional::coordinate(2, 1));
    assert_eq!(id.value.estimate, fit.beta_hat);
    assert!((id.value.se - fit.covariance[(1, 1)].sqrt()).abs() < 1e-15);
    let lin = LinearFunctional {
        weights: vec![2.0, -0.5],
        offset: 1.0,
    };
    let v = &fit.covariance;
    let exact = (4.0 * v[(0, 0)] + 0.25 * v[(1, 1)] - 2.0 * v[(0, 1)]).sqrt();
    let got = delta_method(&fit, &lin);
    assert!((got.value.se - exact).abs() < 1e-12);
    let zero = delta_method(&fit, &LinearFunctional { weights: vec![0.0, 0.0], offset: 3.0 });
    assert!(zero.degenerate && zero.value.se == 0.0);
}

#[test]
fn structural_gradients_match_finite_differences() {
    let ds = endogenous(400, -3.0, 0.4, 8);
    for fit in [fit_cf_twostep(&ds, &bare()).unwrap(), fit_cf_joint_mle(&ds, &bare()).unwrap()] {
        for at in [ApePoint::Overall, ApePoint::AtMeans, ApePoint::AtPre, ApePoint::At(0.2)] {
            for f in [
                StructuralFunctional::margin(&fit, &ds, at).unwrap(),
                StructuralFunctional::ape(&fit, &ds, at).unwrap(),
            ] {
                let g = f.gradient(&fit.params);
                let fd = finite_diff_grad(|p| f.value(p), &fit.params, 1e-6);
                for j in 0..g.len() {
                    assert!((g[j] - fd[j]).abs() < 1e-7, "{at:?} {j}: {} vs {}", g[j], fd[j]);
                }
            }
        }
    }
}

#[test]
fn ape_is_the_slope_of_the_margin_curve() {
    let ds = endogenous(600, -3.3, 0.45, 9);
    let fit = fit_cf_joint_mle(&ds, &bare()).unwrap();
    for d in [-0.3, 0.0, 0.25] {
        let h = 1e-5;
        let m = predictive_margins(&fit, &ds, &[d - h, d + h]).unwrap();
        let slope = (m.at_grid[1].value.estimate - m.at_grid[0].value.estimate) / (2.0 * h);
        let a = ape(&fit, &ds, ApePoint::At(d)).unwrap().estimate;
        assert!(((slope - a) / a).abs() < 1e-4, "{slope} vs {a}");
    }
    let t = ape_table(&fit, &ds).unwrap();
    for e in [t.overall, t.at_means, t.at_pre, t.at_post] {
        assert_eq!(e.estimate.signum(), fit.beta_hat.signum());
    }
}

#[test]
fn margins_follow_the_sign_of_beta() {
    let ds = endogenous(500, -3.0, 0.0, 10);
    let mut fit = fit_probit(&ds, &bare()).unwrap();
    let grid = [-0.4, -0.2, 0.0, 0.2, 0.4];
    let m = predictive_margins(&fit, &ds, &grid).unwrap();
    assert!(m.at_grid.windows(2).all(|w| w[1].value.estimate < w[0].value.estimate));
    assert!(m.at_grid.iter().all(|g| (0.0..=1.0).contains(&g.value.estimate)));
    fit.beta_hat = 0.0;
    fit.params[1] = 0.0;
    let flat = predictive_margins(&fit, &ds, &grid).unwrap();
    let first = flat.at_grid[0].value.estimate;
    assert!(flat.at_grid.iter().all(|g| (g.value.estimate - first).abs() < 1e-15));
    let zero = ape(&fit, &ds, ApePoint::Overall).unwrap();
    assert_eq!(zero.estimate, 0.0);
    assert!(zero.se > 0.0);
}

#[test]
fn fixed_effects_are_coded_and_reused() {
    let mut recs = endogenous(600, -3.0, 0.3, 11).records().to_vec();
    for (i, r) in recs.iter_mut().enumerate() {
        r.location = ["A", "B", "C"][i % 3].into();
    }
    let sig = ["A", "B", "C"]
        .iter()
        .map(|l| LocationSignal { location: l.to_string(), s: 0.5 })
        .collect();
    let ds = validate_dataset(recs, sig).unwrap();
    let spec = ModelSpec {
        fixed_effects: vec![Factor::Location],
        ..ModelSpec::default()
    };
    let fit = fit_cf_joint_mle(&ds, &spec).unwrap();
    assert_eq!(fit.gamma_hat.len(), 2);
    assert!(fit.param_names.iter().any(|n| n.starts_with("fs:location:")));
    let reuse = ModelSpec {
        design: Some(fit.extra.clone()),
        ..spec
    };
    let again = fit_cf_joint_mle(&ds, &reuse).unwrap();
    assert!((again.beta_hat - fit.beta_hat).abs() < 1e-9);
    let names: Vec<String> = fit.coefficients().into_iter().map(|c| c.name).collect();
    assert!(names.contains(&"rho".to_string()) && names.contains(&"sigma_e".to_string()));
}
