//! Fixed-effect and covariate columns shared by the belief and
//! participation models.

use crate::domain::{Dataset, Factor, SubjectRecord};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Dummy coding of one factor. The largest cell is the reference; the
/// remaining columns are ordered by cell size, largest first. A column may
/// absorb several levels after merging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCoding {
    pub factor: Factor,
    pub reference: String,
    pub columns: Vec<Vec<String>>,
}

impl FactorCoding {
    fn label(&self, j: usize) -> String {
        format!("{}:{}", self.factor.name(), self.columns[j].join("/"))
    }
}

/// Extra regressors appended after the model's own columns: fixed-effect
/// dummies, then the dataset's covariates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtraColumns {
    pub factors: Vec<FactorCoding>,
    pub covariates: Vec<String>,
    /// Levels merged because their cell predicted the outcome perfectly.
    pub merges: Vec<String>,
}

fn cell_sizes(ds: &Dataset, factor: Factor) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for r in ds.records() {
        *m.entry(factor.level(r).to_string()).or_insert(0) += 1;
    }
    m
}

fn coding(ds: &Dataset, factor: Factor) -> FactorCoding {
    let sizes = cell_sizes(ds, factor);
    let mut levels: Vec<(&String, &usize)> = sizes.iter().collect();
    // stable sort keeps key order among equal sizes
    levels.sort_by(|a, b| b.1.cmp(a.1));
    let reference = levels.first().map(|l| l.0.clone()).unwrap_or_default();
    FactorCoding {
        factor,
        reference,
        columns: levels.iter().skip(1).map(|l| vec![l.0.clone()]).collect(),
    }
}

/// Merges dummy columns whose cells contain a single outcome class into the
/// neighbouring level (by key order), repeating until none is left.
fn merge_separating(ds: &Dataset, coding: &mut FactorCoding, outcome: &[u8], merges: &mut Vec<String>) {
    loop {
        let mut hit = None;
        for (j, levels) in coding.columns.iter().enumerate() {
            let ys: Vec<u8> = ds
                .records()
                .iter()
                .zip(outcome)
                .filter(|(r, _)| levels.iter().any(|l| l == coding.factor.level(r)))
                .map(|(_, &y)| y)
                .collect();
            if !ys.is_empty() && (ys.iter().all(|&y| y == 0) || ys.iter().all(|&y| y == 1)) {
                hit = Some(j);
                break;
            }
        }
        let Some(j) = hit else { return };
        let removed = coding.columns.remove(j);
        let all = ds.levels(coding.factor);
        let pos = all.iter().position(|l| *l == removed[0]).unwrap_or(0);
        let owner = |lvl: &String| coding.columns.iter().position(|c| c.contains(lvl));
        let prev = all[..pos].iter().rev().find_map(|l| owner(l).map(|c| (c, l.clone())));
        let next = all[pos + 1..].iter().find_map(|l| owner(l).map(|c| (c, l.clone())));
        // adjacent non-reference neighbour; otherwise fold into the reference
        let neighbour = match (prev, next) {
            (Some(p), _) if all[pos - 1] == p.1 => Some(p.0),
            (_, Some(n)) if all.get(pos + 1) == Some(&n.1) => Some(n.0),
            _ => None,
        };
        match neighbour {
            Some(c) => {
                coding.columns[c].extend(removed.iter().cloned());
                coding.columns[c].sort();
                merges.push(format!(
                    "{}: {} merged into {}",
                    coding.factor.name(),
                    removed.join("/"),
                    coding.columns[c].join("/")
                ));
            }
            None => merges.push(format!(
                "{}: {} merged into reference {}",
                coding.factor.name(),
                removed.join("/"),
                coding.reference
            )),
        }
    }
}

impl ExtraColumns {
    /// Codes the requested factors on `ds`. When `outcome` is given, cells
    /// that predict it perfectly are merged.
    pub fn build(ds: &Dataset, factors: &[Factor], covariates: bool, outcome: Option<&[u8]>) -> Self {
        let mut merges = Vec::new();
        let factors = factors
            .iter()
            .map(|&f| {
                let mut c = coding(ds, f);
                if let Some(y) = outcome {
                    merge_separating(ds, &mut c, y, &mut merges);
                }
                c
            })
            .collect();
        ExtraColumns {
            factors,
            covariates: if covariates { ds.covariate_names().to_vec() } else { Vec::new() },
            merges,
        }
    }

    pub fn len(&self) -> usize {
        self.factors.iter().map(|f| f.columns.len()).sum::<usize>() + self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len());
        for f in &self.factors {
            out.extend((0..f.columns.len()).map(|j| f.label(j)));
        }
        out.extend(self.covariates.iter().cloned());
        out
    }

    /// Appends this record's extra columns to `out`. Unknown levels code as
    /// the reference.
    pub fn push_row(&self, r: &SubjectRecord, out: &mut Vec<f64>) {
        for f in &self.factors {
            let lvl = f.factor.level(r);
            out.extend(f.columns.iter().map(|c| if c.iter().any(|l| l == lvl) { 1.0 } else { 0.0 }));
        }
        out.extend(r.covariates.iter().take(self.covariates.len()).copied());
    }

    pub fn rows(&self, ds: &Dataset) -> Vec<Vec<f64>> {
        ds.records()
            .iter()
            .map(|r| {
                let mut v = Vec::with_capacity(self.len());
                self.push_row(r, &mut v);
                v
            })
            .collect()
    }
}
