//! Command-line front end: simulate planted populations, run the estimator
//! suite and test battery, reproduce the field-study tables and sweep over
//! Monte Carlo seeds.

mod battery;
mod estimate;
mod output;
mod reproduce;
mod simulate;
mod sweep;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use stratpart_core::domain::{read_dataset, read_signals, BeliefScale, Factor};
use stratpart_core::{Dataset, Estimator};

#[derive(Debug, Parser)]
#[command(name = "stratpart", version, about = "Strategic interdependence in protest participation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic population with planted parameters.
    Simulate(simulate::SimulateArgs),
    /// Fit the belief and participation models and write result tables.
    Estimate(estimate::EstimateArgs),
    /// Run the randomization, distribution and instrument-validity tests.
    Test(battery::TestArgs),
    /// Run the full pipeline on survey data and compare with the reported
    /// estimates.
    Reproduce(reproduce::ReproduceArgs),
    /// Simulate and estimate over many seeds and summarize recovery.
    Sweep(sweep::SweepArgs),
}

/// Survey input shared by the commands that read data.
#[derive(Debug, Args)]
struct InputArgs {
    /// Subject records in the domain CSV schema.
    #[arg(long)]
    input: PathBuf,
    /// Location signals (`location,s`).
    #[arg(long)]
    signals: PathBuf,
    /// Belief columns are percentages rather than probabilities.
    #[arg(long)]
    percent: bool,
}

impl InputArgs {
    fn load(&self) -> anyhow::Result<Dataset> {
        let scale = if self.percent { BeliefScale::Percent } else { BeliefScale::Unit };
        let signals = read_signals(&self.signals).with_context(|| format!("reading {}", self.signals.display()))?;
        read_dataset(&self.input, signals, scale).with_context(|| format!("reading {}", self.input.display()))
    }
}

fn parse_estimators(s: &str) -> Result<Vec<Estimator>, String> {
    if s.trim() == "all" {
        return Ok(Estimator::ALL.to_vec());
    }
    s.split(',').map(|e| Estimator::parse(e).map_err(|e| e.to_string())).collect()
}

fn parse_cluster_keys(s: &str) -> Result<Vec<Factor>, String> {
    if s.trim() == "none" {
        return Ok(Vec::new());
    }
    s.split(',').map(|k| Factor::parse(k).map_err(|e| e.to_string())).collect()
}

fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad grid value `{v}`: {e}")))
        .collect()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // help and version requests
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            output::report_error("usage", &e.to_string(), &[]);
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Estimate(a) => estimate::run(a),
        Command::Test(a) => battery::run(a),
        Command::Reproduce(a) => reproduce::run(a),
        Command::Sweep(a) => sweep::run(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            output::report_failure(&e);
            ExitCode::FAILURE
        }
    }
}
