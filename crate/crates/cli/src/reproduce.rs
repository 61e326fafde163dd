use crate::output::{create_dir, report_error, write_json, Metadata};
use crate::InputArgs;
use clap::Args;
use std::path::PathBuf;
use std::process::ExitCode;
use stratpart_core::reproduce::{reproduce, Tolerances};

fn tolerance_arg(s: &str) -> Result<Tolerances, String> {
    let mut t = Tolerances::default();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{part}`"))?;
        let v: f64 = value.trim().parse().map_err(|e| format!("bad tolerance `{value}`: {e}"))?;
        if !(v >= 0.0) {
            return Err(format!("tolerance for `{key}` must be non-negative"));
        }
        match key.trim() {
            "beta" => t.beta = v,
            "ape" => t.ape = v,
            "ate" => t.ate = v,
            "margin" => t.margin = v,
            "chi2" => t.chi2 = v,
            other => return Err(format!("unknown tolerance `{other}` (beta, ape, ate, margin, chi2)")),
        }
    }
    Ok(t)
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides such as `beta=0.02,chi2=1`; unspecified keys keep their defaults.
    #[arg(long, value_parser = tolerance_arg, default_value = "")]
    tolerance: Tolerances,
}

/// Exits 1 with an error report when any quantity is outside its tolerance.
pub fn run(args: &ReproduceArgs) -> anyhow::Result<ExitCode> {
    let meta = Metadata::start("reproduce");
    let ds = args.input.load()?;
    let report = reproduce(&ds, &args.tolerance)?;
    create_dir(&args.out)?;
    write_json(&args.out.join("reproduction.json"), &report)?;
    meta.write(&args.out, &["reproduction.json"])?;
    if report.pass {
        return Ok(ExitCode::SUCCESS);
    }
    let misses: Vec<String> = report
        .rows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{}: {} vs reported {} (tolerance {})", r.quantity, r.estimate, r.reported, r.tolerance))
        .collect();
    report_error("reproduction_mismatch", "estimates differ from the reported values", &misses);
    Ok(ExitCode::FAILURE)
}
