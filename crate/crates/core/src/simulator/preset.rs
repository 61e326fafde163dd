use super::{BetaShapes, LevelSpec, LocationSpec, PlantedTruth, SimConfig, UpdateRule};
use crate::error::{Error, Result};

pub const PRESETS: [&str; 1] = ["paper2019"];

fn levels(v: &[(&str, f64)]) -> Vec<LevelSpec> {
    v.iter()
        .map(|&(name, share)| LevelSpec {
            name: name.to_string(),
            share,
        })
        .collect()
}

/// A named calibration.
///
/// `paper2019` reproduces the four-city field study: city sample shares and
/// signal values, beta-distributed prior beliefs (shapes .9805, 2.8988) and
/// reference beliefs (mean .3324, sd .2317), treatment probability 2/3, the
/// least-squares belief-equation coefficients and the joint control-function
/// estimates of the participation equation (alpha -1.0855, beta -3.3062,
/// error correlation .4519, belief-equation sd .1375). City and date effects
/// are the joint-MLE fixed-effect coefficients. Survey-date sample shares
/// were not published; the shares below are illustrative and make the
/// reference dates the largest cells, as in the original design.
pub fn preset(name: &str, n: usize, seed: u64) -> Result<SimConfig> {
    if name != "paper2019" {
        return Err(Error::invalid(format!("unknown preset `{name}` (known: {})", PRESETS.join(", "))));
    }
    let cities = [
        ("Berlin", 0.3245, 0.325, 0.0),
        ("Hamburg", 0.2642, 0.367, 0.1203),
        ("Munich", 0.1854, 0.367, 0.0827),
        ("Cologne", 0.2258, 0.366, 0.2485),
    ];
    let enroll = [
        ("Sep10", 0.40, 0.0),
        ("Sep09", 0.25, -0.0110),
        ("Sep11", 0.12, 0.0650),
        ("Sep07", 0.10, -0.2655),
        ("Sep06", 0.08, -0.0052),
        ("Sep08", 0.05, -0.2767),
    ];
    let treat = [
        ("Sep18", 0.40, 0.0),
        ("Sep17", 0.28, -0.0478),
        ("Sep16", 0.18, -0.2168),
        ("Sep19", 0.11, -0.1817),
        ("Sep20", 0.03, -0.1817),
    ];
    let mut gamma_names = Vec::new();
    let mut gamma = Vec::new();
    for (prefix, effects) in [
        ("location", cities.iter().map(|c| (c.0, c.3)).collect::<Vec<_>>()),
        ("enroll_date", enroll.iter().map(|c| (c.0, c.2)).collect()),
        ("treat_date", treat.iter().map(|c| (c.0, c.2)).collect()),
    ] {
        for (level, g) in effects.into_iter().skip(1) {
            gamma_names.push(format!("{prefix}:{level}"));
            gamma.push(g);
        }
    }
    Ok(SimConfig {
        n,
        locations: cities
            .iter()
            .map(|c| LocationSpec {
                name: c.0.to_string(),
                share: c.1,
                signal: c.2,
            })
            .collect(),
        enroll_dates: levels(&enroll.map(|e| (e.0, e.1))),
        treat_dates: levels(&treat.map(|e| (e.0, e.1))),
        prior_belief_shapes: BetaShapes { a: 0.9805, b: 2.8988 },
        ref_belief_shapes: BetaShapes::from_moments(0.3324, 0.2317)?,
        treat_prob: 2.0 / 3.0,
        truth: PlantedTruth {
            theta: vec![0.0071, 0.0425, -0.0003, -0.0979],
            alpha: -1.0855,
            beta: -3.3062,
            gamma,
            gamma_names,
            rho: 0.4519,
            sigma_e: 0.1375,
            direct_treatment_effect: 0.0,
        },
        psi: UpdateRule::Group,
        // local observer, counter-protester, participant elsewhere, absent
        nonparticipant_code_shares: [0.0927, 0.0007, 0.0338, 0.7629],
        seed,
    })
}
