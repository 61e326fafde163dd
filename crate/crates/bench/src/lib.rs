//! Fixtures shared by the benchmarks.

use stratpart_core::simulator::{generate_population, preset};
use stratpart_core::Dataset;

/// A sample drawn from the default calibration.
pub fn sample(n: usize, seed: u64) -> Dataset {
    let config = preset("paper2019", n, seed).expect("default preset");
    generate_population(&config).expect("simulation").dataset
}
