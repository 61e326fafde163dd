//! Testable implications of instrument validity with a binary endogenous
//! variable: for every outcome value `y`,
//! `P(a = y, D = 1 | z = 0) <= P(a = y, D = 1 | z = 1)` and
//! `P(a = y, D = 0 | z = 1) <= P(a = y, D = 0 | z = 0)`.
//!
//! The statistic is the largest studentized violation. Its critical value
//! comes from a bootstrap of the recentred maximum over the moments that
//! survive generalized moment selection. This approximates the
//! intersection-bounds procedure rather than reproducing its local
//! nonparametric machinery.

use super::TestResult;
use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::numerics::RandomStream;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// How the belief change is turned into the binary endogenous variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionRule {
    /// `D = 1` when beliefs move the way the treatment pushes them: up in
    /// the below group, down in the above group.
    Predicted,
    /// `D = 1{delta_b > threshold}` in both groups.
    Above(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateOptions {
    pub direction: DirectionRule,
    pub replications: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for LateOptions {
    fn default() -> Self {
        LateOptions {
            direction: DirectionRule::Predicted,
            replications: 999,
            seed: 0,
            level: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentInequality {
    pub label: String,
    /// Estimated left side minus right side; positive values violate.
    pub value: f64,
    pub se: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateValidity {
    /// 0 for the below group, 1 for the above group.
    pub group: u8,
    pub result: TestResult,
    pub rejected: bool,
    pub moments: Vec<MomentInequality>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateBattery {
    pub below: LateValidity,
    pub above: LateValidity,
    /// Either group rejects.
    pub rejected: bool,
}

/// Cell shares `[y][d]` within one treatment arm.
fn shares(a: &[u8], d: &[u8], rows: &[usize]) -> [[f64; 2]; 2] {
    let mut c = [[0.0; 2]; 2];
    for &i in rows {
        c[a[i] as usize][d[i] as usize] += 1.0;
    }
    let n = rows.len() as f64;
    c.map(|r| r.map(|v| v / n))
}

/// Moment values `[y=0: D1, D0, y=1: D1, D0]`.
fn moments(s0: &[[f64; 2]; 2], s1: &[[f64; 2]; 2]) -> [f64; 4] {
    [s0[0][1] - s1[0][1], s1[0][0] - s0[0][0], s0[1][1] - s1[1][1], s1[1][0] - s0[1][0]]
}

const LABELS: [&str; 4] = [
    "P(a=0,D=1|z=0) <= P(a=0,D=1|z=1)",
    "P(a=0,D=0|z=1) <= P(a=0,D=0|z=0)",
    "P(a=1,D=1|z=0) <= P(a=1,D=1|z=1)",
    "P(a=1,D=0|z=1) <= P(a=1,D=0|z=0)",
];

/// Validity test within the below (`group = 0`) or above (`group = 1`)
/// group. Rejects when the bootstrap p-value is below `opts.level`.
pub fn late_validity_test(ds: &Dataset, group: u8, opts: &LateOptions) -> Result<LateValidity> {
    if group > 1 {
        return Err(Error::invalid(format!("group must be 0 or 1, got {group}")));
    }
    if opts.replications == 0 {
        return Err(Error::invalid("validity test needs at least one replication"));
    }
    let rows = ds.group_rows(group);
    let z = ds.treatment();
    let a = ds.outcome();
    let arm0: Vec<usize> = rows.iter().copied().filter(|&i| z[i] == 0).collect();
    let arm1: Vec<usize> = rows.iter().copied().filter(|&i| z[i] == 1).collect();
    if arm0.is_empty() || arm1.is_empty() {
        return Err(Error::invalid(format!("group {group} lacks a treatment arm")));
    }
    let d: Vec<u8> = ds
        .delta_b()
        .iter()
        .map(|&v| {
            u8::from(match opts.direction {
                DirectionRule::Predicted if group == 0 => v > 0.0,
                DirectionRule::Predicted => v < 0.0,
                DirectionRule::Above(t) => v > t,
            })
        })
        .collect();
    let method = "moment inequalities: bootstrap max with moment selection";
    let rule = format!("endogenous indicator: {:?}", opts.direction);

    if rows.iter().all(|&i| d[i] == d[rows[0]]) {
        let result = TestResult::new(0.0, None, 1.0, method)
            .note(rule)
            .note("endogenous indicator constant in group; inequalities hold trivially");
        return Ok(LateValidity {
            group,
            result,
            rejected: false,
            moments: Vec::new(),
        });
    }

    let (n0, n1) = (arm0.len() as f64, arm1.len() as f64);
    let (s0, s1) = (shares(&a, &d, &arm0), shares(&a, &d, &arm1));
    let theta = moments(&s0, &s1);
    let cells = [(0, 1), (0, 0), (1, 1), (1, 0)];
    let se: Vec<f64> = cells
        .iter()
        .map(|&(y, dd)| {
            let (p0, p1) = (s0[y][dd], s1[y][dd]);
            (p0 * (1.0 - p0) / n0 + p1 * (1.0 - p1) / n1).sqrt()
        })
        .collect();
    let t: Vec<f64> = theta
        .iter()
        .zip(&se)
        .map(|(&th, &s)| match (s > 0.0, th > 0.0) {
            (true, _) => th / s,
            (false, true) => f64::INFINITY,
            (false, false) => 0.0,
        })
        .collect();
    let stat = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kappa = (rows.len() as f64).ln().sqrt();
    let selected: Vec<bool> = t.iter().zip(&se).map(|(&tj, &s)| s > 0.0 && tj >= -kappa).collect();

    let p = if !selected.iter().any(|&s| s) {
        if stat > 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        let exceed = (0..opts.replications)
            .filter(|&r| {
                let mut rng = RandomStream::new(opts.seed, r as u64).rng();
                let mut draw = |arm: &[usize]| -> Vec<usize> {
                    (0..arm.len()).map(|_| arm[rng.random_range(0..arm.len())]).collect()
                };
                let (b0, b1) = (draw(&arm0), draw(&arm1));
                let th = moments(&shares(&a, &d, &b0), &shares(&a, &d, &b1));
                let m = (0..4)
                    .filter(|&j| selected[j])
                    .map(|j| (th[j] - theta[j]) / se[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                m >= stat
            })
            .count();
        exceed as f64 / opts.replications as f64
    };
    let n_sel = selected.iter().filter(|&&s| s).count();
    let result = TestResult::new(stat, None, p, method)
        .note(rule)
        .note(format!("{n_sel} of 4 inequalities selected"));
    Ok(LateValidity {
        group,
        rejected: p < opts.level,
        result,
        moments: (0..4)
            .map(|j| MomentInequality {
                label: LABELS[j].to_string(),
                value: theta[j],
                se: se[j],
                selected: selected[j],
            })
            .collect(),
    })
}

/// Runs the test in both groups; the battery rejects if either does.
pub fn late_battery(ds: &Dataset, opts: &LateOptions) -> Result<LateBattery> {
    let below = late_validity_test(ds, 0, opts)?;
    let above = late_validity_test(
        ds,
        1,
        &LateOptions {
            seed: opts.seed.wrapping_add(1),
            ..opts.clone()
        },
    )?;
    Ok(LateBattery {
        rejected: below.rejected || above.rejected,
        below,
        above,
    })
}
