//! Survey records, location signals and the validated analysis dataset.

mod io;

pub use io::{
    read_dataset, read_intents, read_records, read_signals, write_dataset, write_signals,
    BeliefScale,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};

/// One panel respondent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub location: String,
    /// Day of the first survey.
    pub enroll_date: String,
    /// Day of the second survey, when treatment was assigned.
    pub treat_date: String,
    /// Belief before the intervention.
    pub b_prior: f64,
    /// Belief after the intervention.
    pub b_post: f64,
    /// Reference belief about others' stated intentions.
    pub b_ref: f64,
    pub z: u8,
    pub a: u8,
    pub raw_outcome_code: Option<u8>,
    pub covariates: Vec<f64>,
}

/// Share of first-survey respondents at a location who intend or rather
/// intend to participate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationSignal {
    pub location: String,
    pub s: f64,
}

/// Cross-classification key used for cluster resampling.
pub type ClusterKey = (String, String, String);

/// Which record field a cluster or fixed effect is formed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Location,
    EnrollDate,
    TreatDate,
}

impl Factor {
    pub const ALL: [Factor; 3] = [Factor::Location, Factor::EnrollDate, Factor::TreatDate];

    pub fn level<'a>(&self, r: &'a SubjectRecord) -> &'a str {
        match self {
            Factor::Location => &r.location,
            Factor::EnrollDate => &r.enroll_date,
            Factor::TreatDate => &r.treat_date,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Factor::Location => "location",
            Factor::EnrollDate => "enroll_date",
            Factor::TreatDate => "treat_date",
        }
    }

    pub fn parse(s: &str) -> Result<Factor> {
        match s.trim() {
            "location" => Ok(Factor::Location),
            "enroll_date" => Ok(Factor::EnrollDate),
            "treat_date" => Ok(Factor::TreatDate),
            other => Err(Error::invalid(format!("unknown cluster key `{other}`"))),
        }
    }
}

/// Maps the five-way outcome question to the participation indicator:
/// only code 1 (joined the local event) counts as participation.
pub fn derive_outcome(raw_outcome_code: i64, subject_id: &str) -> Result<u8> {
    match raw_outcome_code {
        1 => Ok(1),
        2..=5 => Ok(0),
        other => Err(Error::Validation(vec![format!(
            "subject {subject_id}: outcome code {other} outside 1..=5"
        )])),
    }
}

/// Signal value from first-survey intention codes (1 yes, 2 rather yes,
/// 3 rather no, 4 no).
pub fn compute_signal(intent_codes: &[u8], location: &str) -> Result<LocationSignal> {
    if intent_codes.is_empty() {
        return Err(Error::invalid(format!(
            "no intention responses for location {location}"
        )));
    }
    if let Some(bad) = intent_codes.iter().find(|c| !(1..=4).contains(*c)) {
        return Err(Error::invalid(format!(
            "intention code {bad} outside 1..=4 at location {location}"
        )));
    }
    let yes = intent_codes.iter().filter(|&&c| c <= 2).count();
    Ok(LocationSignal {
        location: location.to_string(),
        s: yes as f64 / intent_codes.len() as f64,
    })
}

/// Condition indicator: 1 when the reference belief is at or above the
/// signal.
pub fn derive_condition(b_ref: f64, s: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&b_ref) || !(0.0..=1.0).contains(&s) {
        return Err(Error::invalid(format!(
            "condition inputs out of range: b_ref = {b_ref}, s = {s}"
        )));
    }
    Ok(u8::from(b_ref >= s))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellCounts {
    pub n: usize,
    pub below: usize,
    pub above: usize,
    pub control: usize,
    pub treated: usize,
    pub participants: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub overall: CellCounts,
    pub by_location: BTreeMap<String, CellCounts>,
    /// Counts indexed `[c][z]`.
    pub condition_by_treatment: [[usize; 2]; 2],
    pub clusters_feasible: usize,
    pub clusters_populated: usize,
}

/// Validated records with the derived condition indicator and belief change.
/// Immutable once built.
#[derive(Debug, Clone)]
pub struct Dataset {
    records: Vec<SubjectRecord>,
    signals: Vec<LocationSignal>,
    covariate_names: Vec<String>,
    condition: Vec<u8>,
    delta_b: Vec<f64>,
}

fn check_prob(errors: &mut Vec<String>, id: &str, name: &str, v: f64) {
    if !(0.0..=1.0).contains(&v) {
        errors.push(format!("subject {id}: {name} = {v} outside [0, 1]"));
    }
}

/// Checks every record invariant and derives `c` and `delta_b`.
/// All problems are collected and reported together.
pub fn validate_dataset(records: Vec<SubjectRecord>, signals: Vec<LocationSignal>) -> Result<Dataset> {
    validate_with_names(records, signals, Vec::new())
}

pub(crate) fn validate_with_names(
    records: Vec<SubjectRecord>,
    signals: Vec<LocationSignal>,
    mut covariate_names: Vec<String>,
) -> Result<Dataset> {
    let mut errors = Vec::new();
    let mut signal_map = BTreeMap::new();
    for sig in &signals {
        if !(0.0..=1.0).contains(&sig.s) {
            errors.push(format!("location {}: signal {} outside [0, 1]", sig.location, sig.s));
        }
        if signal_map.insert(sig.location.clone(), sig.s).is_some() {
            errors.push(format!("location {}: duplicate signal", sig.location));
        }
    }

    let k = records.first().map_or(0, |r| r.covariates.len());
    if covariate_names.is_empty() {
        covariate_names = (1..=k).map(|j| format!("x_{j}")).collect();
    } else if covariate_names.len() != k {
        errors.push(format!(
            "{} covariate names supplied for {} covariate columns",
            covariate_names.len(),
            k
        ));
    }

    let mut seen = HashSet::new();
    let mut condition = Vec::with_capacity(records.len());
    let mut delta_b = Vec::with_capacity(records.len());
    for r in &records {
        let id = r.subject_id.as_str();
        if !seen.insert(id) {
            errors.push(format!("subject {id}: duplicate subject_id"));
        }
        check_prob(&mut errors, id, "b_prior", r.b_prior);
        check_prob(&mut errors, id, "b_post", r.b_post);
        check_prob(&mut errors, id, "b_ref", r.b_ref);
        if r.z > 1 {
            errors.push(format!("subject {id}: z = {} not binary", r.z));
        }
        if r.a > 1 {
            errors.push(format!("subject {id}: a = {} not binary", r.a));
        }
        if let Some(code) = r.raw_outcome_code {
            match derive_outcome(code as i64, id) {
                Ok(a) if a != r.a => errors.push(format!(
                    "subject {id}: a = {} inconsistent with outcome code {code}",
                    r.a
                )),
                Ok(_) => {}
                Err(Error::Validation(msgs)) => errors.extend(msgs),
                Err(e) => errors.push(e.to_string()),
            }
        }
        if r.covariates.len() != k {
            errors.push(format!(
                "subject {id}: {} covariates, expected {k}",
                r.covariates.len()
            ));
        }
        if r.covariates.iter().any(|v| !v.is_finite()) {
            errors.push(format!("subject {id}: non-finite covariate"));
        }
        let c = match signal_map.get(&r.location) {
            Some(&s) => derive_condition(r.b_ref, s).unwrap_or(0),
            None => {
                errors.push(format!("subject {id}: no signal for location {}", r.location));
                0
            }
        };
        condition.push(c);
        delta_b.push(r.b_post - r.b_prior);
    }

    if !errors.is_empty() {
        return Err(Error::Validation(errors));
    }
    Ok(Dataset {
        records,
        signals,
        covariate_names,
        condition,
        delta_b,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn signals(&self) -> &[LocationSignal] {
        &self.signals
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn signal(&self, location: &str) -> Option<f64> {
        self.signals.iter().find(|s| s.location == location).map(|s| s.s)
    }

    /// Condition indicator per record.
    pub fn condition(&self) -> &[u8] {
        &self.condition
    }

    /// Belief change `b_post - b_prior` per record.
    pub fn delta_b(&self) -> &[f64] {
        &self.delta_b
    }

    pub fn treatment(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.z).collect()
    }

    pub fn outcome(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.a).collect()
    }

    pub fn cluster_key(&self, i: usize) -> ClusterKey {
        let r = &self.records[i];
        (r.location.clone(), r.enroll_date.clone(), r.treat_date.clone())
    }

    /// Levels of a factor, sorted.
    pub fn levels(&self, factor: Factor) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| factor.level(r)).collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// A new dataset made of the given rows, repeats allowed. Used by
    /// resampling; rows were validated when `self` was built.
    pub fn resample(&self, rows: &[usize]) -> Dataset {
        Dataset {
            records: rows.iter().map(|&i| self.records[i].clone()).collect(),
            signals: self.signals.clone(),
            covariate_names: self.covariate_names.clone(),
            condition: rows.iter().map(|&i| self.condition[i]).collect(),
            delta_b: rows.iter().map(|&i| self.delta_b[i]).collect(),
        }
    }

    /// Rows in the below (`c = 0`) or above (`c = 1`) group.
    pub fn group_rows(&self, c: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.condition[i] == c).collect()
    }

    pub fn summary(&self) -> DatasetSummary {
        let mut overall = CellCounts::default();
        let mut by_location: BTreeMap<String, CellCounts> = BTreeMap::new();
        let mut cells = [[0usize; 2]; 2];
        let mut clusters = BTreeSet::new();
        for (i, r) in self.records.iter().enumerate() {
            let c = self.condition[i];
            cells[c as usize][r.z as usize] += 1;
            clusters.insert(self.cluster_key(i));
            for counts in [&mut overall, by_location.entry(r.location.clone()).or_default()] {
                counts.n += 1;
                if c == 1 {
                    counts.above += 1;
                } else {
                    counts.below += 1;
                }
                if r.z == 1 {
                    counts.treated += 1;
                } else {
                    counts.control += 1;
                }
                counts.participants += r.a as usize;
            }
        }
        let feasible = self.levels(Factor::Location).len()
            * self.levels(Factor::EnrollDate).len()
            * self.levels(Factor::TreatDate).len();
        DatasetSummary {
            overall,
            by_location,
            condition_by_treatment: cells,
            clusters_feasible: feasible,
            clusters_populated: clusters.len(),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn record(id: &str, loc: &str, prior: f64, post: f64, bref: f64, z: u8, a: u8) -> SubjectRecord {
        SubjectRecord {
            subject_id: id.into(),
            location: loc.into(),
            enroll_date: "d1".into(),
            treat_date: "t1".into(),
            b_prior: prior,
            b_post: post,
            b_ref: bref,
            z,
            a,
            raw_outcome_code: None,
            covariates: vec![],
        }
    }

    fn berlin() -> Vec<LocationSignal> {
        vec![LocationSignal { location: "Berlin".into(), s: 0.325 }]
    }

    #[test]
    fn outcome_mapping() {
        assert_eq!(derive_outcome(1, "x").unwrap(), 1);
        assert_eq!(derive_outcome(5, "x").unwrap(), 0);
        assert_eq!(derive_outcome(4, "x").unwrap(), 0);
        let err = derive_outcome(6, "s17").unwrap_err().to_string();
        assert!(err.contains("s17"));
    }

    #[test]
    fn signal_from_codes() {
        assert_eq!(compute_signal(&[4, 4, 4], "H").unwrap().s, 0.0);
        assert_eq!(compute_signal(&[1, 2, 3, 4], "H").unwrap().s, 0.5);
        assert!(compute_signal(&[], "H").is_err());
        assert!(compute_signal(&[0], "H").is_err());
        // Berlin first-survey shares .0660/.2594/.1946/.4800 on 10 000 codes
        let mut codes = vec![1u8; 660];
        codes.extend(std::iter::repeat(2).take(2594));
        codes.extend(std::iter::repeat(3).take(1946));
        codes.extend(std::iter::repeat(4).take(4800));
        let s = compute_signal(&codes, "Berlin").unwrap().s;
        assert!((s - 0.325).abs() < 0.001);
    }

    #[test]
    fn condition_boundary_goes_above() {
        assert_eq!(derive_condition(0.5, 0.325).unwrap(), 1);
        assert_eq!(derive_condition(0.1, 0.367).unwrap(), 0);
        assert_eq!(derive_condition(0.367, 0.367).unwrap(), 1);
        assert!(derive_condition(1.1, 0.3).is_err());
    }

    #[test]
    fn validates_and_derives() {
        let ds = validate_dataset(
            vec![
                record("1", "Berlin", 0.2, 0.3, 0.5, 1, 0),
                record("2", "Berlin", 0.4, 0.1, 0.1, 0, 1),
            ],
            berlin(),
        )
        .unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.condition(), &[1, 0]);
        assert!((ds.delta_b()[0] - 0.1).abs() < 1e-12);
        assert!((ds.delta_b()[1] + 0.3).abs() < 1e-12);
        let s = ds.summary();
        assert_eq!(s.overall.above + s.overall.below, 2);
        assert_eq!(s.clusters_populated, 1);
    }

    #[test]
    fn reports_every_problem_with_ids() {
        let mut bad = record("s9", "Berlin", 0.2, 1.2, 0.5, 1, 0);
        bad.raw_outcome_code = Some(1);
        let dup = record("s9", "Paris", 0.2, 0.2, 0.5, 1, 0);
        let err = validate_dataset(vec![bad, dup], berlin()).unwrap_err();
        let Error::Validation(msgs) = err else { panic!() };
        assert!(msgs.iter().any(|m| m.contains("s9") && m.contains("b_post")));
        assert!(msgs.iter().any(|m| m.contains("inconsistent")));
        assert!(msgs.iter().any(|m| m.contains("duplicate")));
        assert!(msgs.iter().any(|m| m.contains("no signal")));
    }
}
