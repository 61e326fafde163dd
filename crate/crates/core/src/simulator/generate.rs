use super::{PlantedTruth, SimConfig, UpdateRule};
use crate::domain::{derive_condition, validate_dataset, Dataset, LocationSignal, SubjectRecord};
use crate::error::{Error, Result};
use crate::numerics::RandomStream;
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Redraws of the prior belief before falling back to clipping.
const MAX_PRIOR_DRAWS: usize = 200;

#[derive(Debug, Clone)]
pub struct Population {
    pub dataset: Dataset,
    pub truth: PlantedTruth,
    /// Records whose posterior belief had to be clipped to `[0, 1]`.
    pub clipped: usize,
    pub warnings: Vec<String>,
}

fn weighted(shares: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(shares.iter().copied()).map_err(|e| Error::invalid(e.to_string()))
}

/// Draws a population from `config`.
///
/// The belief-equation error is exactly normal. When `b_prior + delta_b`
/// leaves `[0, 1]` the prior belief is redrawn; after repeated failures the
/// posterior belief is clipped and counted, with a warning above 5%.
/// Everything comes from one random stream, so a config reproduces its
/// dataset bit for bit.
pub fn generate_population(config: &SimConfig) -> Result<Population> {
    config.validate()?;
    let t = &config.truth;
    let mut rng = RandomStream::new(config.seed, 0).rng();
    let loc_dist = weighted(&config.locations.iter().map(|l| l.share).collect::<Vec<_>>())?;
    let enroll_dist = weighted(&config.enroll_dates.iter().map(|l| l.share).collect::<Vec<_>>())?;
    let treat_dist = weighted(&config.treat_dates.iter().map(|l| l.share).collect::<Vec<_>>())?;
    let code_dist = weighted(&config.nonparticipant_code_shares)?;
    let beta_err = |e: rand_distr::BetaError| Error::invalid(e.to_string());
    let prior = Beta::new(config.prior_belief_shapes.a, config.prior_belief_shapes.b).map_err(beta_err)?;
    let reference = Beta::new(config.ref_belief_shapes.a, config.ref_belief_shapes.b).map_err(beta_err)?;

    let loc_effect: Vec<f64> = config
        .locations
        .iter()
        .map(|l| t.gamma_of(&format!("location:{}", l.name)))
        .collect();
    let enroll_effect: Vec<f64> = config
        .enroll_dates
        .iter()
        .map(|l| t.gamma_of(&format!("enroll_date:{}", l.name)))
        .collect();
    let treat_effect: Vec<f64> = config
        .treat_dates
        .iter()
        .map(|l| t.gamma_of(&format!("treat_date:{}", l.name)))
        .collect();
    let th = &t.theta;
    let v_scale = (1.0 - t.rho * t.rho).sqrt();

    let mut records = Vec::with_capacity(config.n);
    let mut clipped = 0;
    for i in 0..config.n {
        let li = loc_dist.sample(&mut rng);
        let ei = enroll_dist.sample(&mut rng);
        let ti = treat_dist.sample(&mut rng);
        let loc = &config.locations[li];
        let b_ref: f64 = reference.sample(&mut rng);
        let c = derive_condition(b_ref, loc.signal)? as f64;
        let z = u8::from(rng.random_bool(config.treat_prob));
        let zf = z as f64;
        let e_std: f64 = StandardNormal.sample(&mut rng);
        let v: f64 = StandardNormal.sample(&mut rng);
        let e = t.sigma_e * e_std;
        let u = t.rho * e_std + v_scale * v;
        let mean = match config.psi {
            UpdateRule::Group => th[0] + th[1] * zf + th[2] * c + th[3] * zf * c,
            UpdateRule::Tanh { amplitude, slope } => {
                th[0] + th[2] * c + zf * amplitude * (slope * (loc.signal - b_ref)).tanh()
            }
        };
        let delta = mean + e;

        let mut b_prior: f64 = prior.sample(&mut rng);
        let mut tries = 1;
        while !(0.0..=1.0).contains(&(b_prior + delta)) && tries < MAX_PRIOR_DRAWS {
            b_prior = prior.sample(&mut rng);
            tries += 1;
        }
        let raw_post = b_prior + delta;
        let b_post = raw_post.clamp(0.0, 1.0);
        if b_post != raw_post {
            clipped += 1;
        }
        let observed_delta = b_post - b_prior;

        let index = t.alpha
            + t.beta * observed_delta
            + loc_effect[li]
            + enroll_effect[ei]
            + treat_effect[ti]
            + t.direct_treatment_effect * zf;
        let a = u8::from(index + u > 0.0);
        let code = if a == 1 { 1 } else { 2 + code_dist.sample(&mut rng) as u8 };
        records.push(SubjectRecord {
            subject_id: format!("s{i:05}"),
            location: loc.name.clone(),
            enroll_date: config.enroll_dates[ei].name.clone(),
            treat_date: config.treat_dates[ti].name.clone(),
            b_prior,
            b_post,
            b_ref,
            z,
            a,
            raw_outcome_code: Some(code),
            covariates: Vec::new(),
        });
    }
    let signals: Vec<LocationSignal> = config
        .locations
        .iter()
        .map(|l| LocationSignal {
            location: l.name.clone(),
            s: l.signal,
        })
        .collect();
    let mut warnings = Vec::new();
    if clipped as f64 > 0.05 * config.n as f64 {
        warnings.push(format!(
            "{clipped} of {} posterior beliefs clipped to [0, 1] ({:.1}%)",
            config.n,
            100.0 * clipped as f64 / config.n as f64
        ));
    }
    // locations that drew no records carry no signal row
    let dataset = {
        let present: std::collections::BTreeSet<&str> = records.iter().map(|r| r.location.as_str()).collect();
        let signals: Vec<LocationSignal> = signals
            .into_iter()
            .filter(|s: &LocationSignal| present.contains(s.location.as_str()))
            .collect();
        validate_dataset(records, signals)?
    };
    Ok(Population {
        dataset,
        truth: t.clone(),
        clipped,
        warnings,
    })
}

#[derive(Serialize, Deserialize)]
struct TruthFile {
    truth: PlantedTruth,
    config: Option<SimConfig>,
}

/// Writes the planted parameters (and optionally the generating config) as
/// JSON next to a simulated dataset.
pub fn write_truth(path: &Path, truth: &PlantedTruth, config: Option<&SimConfig>) -> Result<()> {
    let file = TruthFile {
        truth: truth.clone(),
        config: config.cloned(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<PlantedTruth> {
    let file: TruthFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(file.truth)
}
