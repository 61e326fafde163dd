use crate::domain::{Dataset, Factor};
use crate::error::{Error, Result};
use crate::numerics::RandomStream;
use crate::participation::{self, ape_table, predictive_margins, Estimator, ModelSpec, ParticipationFit};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub replications: usize,
    /// Resample whole clusters formed by crossing these factors; `None`
    /// resamples records.
    pub cluster_keys: Option<Vec<Factor>>,
    pub seed: u64,
    /// Drop failed replications instead of failing the whole run.
    pub drop_failed: bool,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        BootstrapSpec {
            replications: 1000,
            cluster_keys: Some(Factor::ALL.to_vec()),
            seed: 0,
            drop_failed: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Standard deviation across completed replications, per statistic.
    pub se: Vec<f64>,
    pub mean: Vec<f64>,
    pub completed: usize,
    pub failed: usize,
    /// Number of resampling units (clusters or records).
    pub units: usize,
    /// First few failure messages.
    pub failures: Vec<String>,
    #[serde(skip)]
    pub replicates: Vec<Vec<f64>>,
}

fn units(ds: &Dataset, keys: Option<&[Factor]>) -> Vec<Vec<usize>> {
    match keys {
        None => (0..ds.len()).map(|i| vec![i]).collect(),
        Some(keys) => {
            let mut map: BTreeMap<Vec<&str>, Vec<usize>> = BTreeMap::new();
            for (i, r) in ds.records().iter().enumerate() {
                map.entry(keys.iter().map(|f| f.level(r)).collect()).or_default().push(i);
            }
            map.into_values().collect()
        }
    }
}

/// Resamples `ds` and recomputes `stat` on every replication.
///
/// Replication `r` draws from its own random stream, so results do not
/// depend on the thread schedule.
pub fn bootstrap<F>(ds: &Dataset, spec: &BootstrapSpec, stat: F) -> Result<BootstrapResult>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Sync,
{
    if spec.replications == 0 {
        return Err(Error::invalid("bootstrap needs at least one replication"));
    }
    if ds.is_empty() {
        return Err(Error::invalid("bootstrap of an empty dataset"));
    }
    let groups = units(ds, spec.cluster_keys.as_deref());
    let g = groups.len();
    let outcomes: Vec<Result<Vec<f64>>> = (0..spec.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = RandomStream::new(spec.seed, r as u64).rng();
            let mut rows = Vec::with_capacity(ds.len());
            for _ in 0..g {
                rows.extend_from_slice(&groups[rng.random_range(0..g)]);
            }
            stat(&ds.resample(&rows))
        })
        .collect();

    let mut replicates = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    let mut failed = 0;
    for o in outcomes {
        match o {
            Ok(v) if v.iter().all(|x| x.is_finite()) => replicates.push(v),
            Ok(_) => {
                failed += 1;
                if failures.len() < 5 {
                    failures.push("non-finite statistic".to_string());
                }
            }
            Err(e) => {
                failed += 1;
                if failures.len() < 5 {
                    failures.push(e.to_string());
                }
            }
        }
    }
    if replicates.is_empty() {
        return Err(Error::BootstrapFailed(spec.replications));
    }
    if failed > 0 && !spec.drop_failed {
        return Err(Error::invalid(format!(
            "{failed} of {} bootstrap replications failed: {}",
            spec.replications,
            failures.first().cloned().unwrap_or_default()
        )));
    }
    let k = replicates[0].len();
    if replicates.iter().any(|v| v.len() != k) {
        return Err(Error::invalid("bootstrap statistic changed length between replications"));
    }
    let b = replicates.len() as f64;
    let mean: Vec<f64> = (0..k).map(|j| replicates.iter().map(|v| v[j]).sum::<f64>() / b).collect();
    let se = (0..k)
        .map(|j| {
            if replicates.len() < 2 {
                return f64::NAN;
            }
            // shifted by the first replicate: exact zero for constant output
            let shift = replicates[0][j];
            let (s1, s2) = replicates
                .iter()
                .map(|v| v[j] - shift)
                .fold((0.0, 0.0), |(s1, s2), d| (s1 + d, s2 + d * d));
            ((s2 - s1 * s1 / b).max(0.0) / (b - 1.0)).sqrt()
        })
        .collect();
    Ok(BootstrapResult {
        se,
        mean,
        completed: replicates.len(),
        failed,
        units: g,
        failures,
        replicates,
    })
}

/// Parameters, then the overall margin, the grid margins and the four APEs
/// (overall, at means, pre, post). Margins and APEs are omitted for the
/// minimum chi-squared estimator.
pub fn participation_statistics(fit: &ParticipationFit, ds: &Dataset, grid: &[f64]) -> Result<Vec<f64>> {
    let mut out = fit.params.clone();
    if fit.estimator != Estimator::NeweyMinchi2 {
        let m = predictive_margins(fit, ds, grid)?;
        out.push(m.overall.estimate);
        out.extend(m.at_grid.iter().map(|g| g.value.estimate));
        let a = ape_table(fit, ds)?;
        out.extend([a.overall.estimate, a.at_means.estimate, a.at_pre.estimate, a.at_post.estimate]);
    }
    Ok(out)
}

/// Bootstraps [`participation_statistics`] for `estimator`, holding the
/// full-sample fixed-effect coding fixed across replications.
pub fn bootstrap_participation(
    ds: &Dataset,
    model: &ModelSpec,
    estimator: Estimator,
    grid: &[f64],
    spec: &BootstrapSpec,
) -> Result<(ParticipationFit, BootstrapResult)> {
    let full = participation::fit(ds, model, estimator)?;
    let fixed = ModelSpec {
        design: Some(full.extra.clone()),
        ..model.clone()
    };
    let res = bootstrap(ds, spec, |rep| {
        let f = participation::fit(rep, &fixed, estimator)?;
        participation_statistics(&f, rep, grid)
    })?;
    Ok((full, res))
}
