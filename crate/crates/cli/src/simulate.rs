use crate::output::{create_dir, write_json, Metadata};
use anyhow::Context;
use clap::Args;
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;
use stratpart_core::domain::{write_dataset, write_signals};
use stratpart_core::simulator::{generate_population, preset, write_truth};
use stratpart_core::SimConfig;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Named calibration.
    #[arg(long, default_value = "paper2019")]
    preset: String,
    /// Full configuration as JSON; overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of subjects.
    #[arg(long, default_value_t = 1510)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: &SimulateArgs) -> anyhow::Result<ExitCode> {
    let meta = Metadata::start("simulate");
    let config: SimConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut c: SimConfig = serde_json::from_str(&text).context("parsing the simulation config")?;
            c.seed = args.seed;
            c
        }
        None => preset(&args.preset, args.n, args.seed)?,
    };
    let pop = generate_population(&config)?;
    create_dir(&args.out)?;
    write_dataset(args.out.join("data.csv"), &pop.dataset)?;
    write_signals(args.out.join("signals.csv"), pop.dataset.signals())?;
    write_truth(&args.out.join("truth.json"), &pop.truth, Some(&config))?;
    write_json(
        &args.out.join("simulation.json"),
        &json!({
            "preset": if args.config.is_some() { None } else { Some(&args.preset) },
            "seed": args.seed,
            "n": pop.dataset.len(),
            "clipped": pop.clipped,
            "warnings": pop.warnings,
            "summary": pop.dataset.summary(),
        }),
    )?;
    meta.write(&args.out, &["data.csv", "signals.csv", "truth.json", "simulation.json"])?;
    for w in &pop.warnings {
        eprintln!("warning: {w}");
    }
    Ok(ExitCode::SUCCESS)
}
