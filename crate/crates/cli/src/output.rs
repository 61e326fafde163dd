//! Result files, metadata and error reports.
//!
//! Result files contain only quantities determined by the inputs and flags,
//! so repeated runs are byte-identical. Wall-clock times go to
//! `metadata.json`.

use anyhow::Context;
use serde::Serialize;
use serde_json::json;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};
use stratpart_core::{Error, Estimate};

pub const STANDARD: &str = "standard";
pub const BOOTSTRAP: &str = "bootstrap";
pub const CLUSTER_BOOTSTRAP: &str = "cluster-bootstrap";

/// A point estimate with standard errors keyed by how they were obtained.
#[derive(Debug, Clone, Serialize)]
pub struct Reported {
    pub estimate: f64,
    pub se: BTreeMap<&'static str, f64>,
}

impl Reported {
    pub fn standard(e: Estimate) -> Self {
        Reported {
            estimate: e.estimate,
            se: BTreeMap::from([(STANDARD, e.se)]),
        }
    }
}

pub fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Run bookkeeping kept apart from the deterministic results.
pub struct Metadata {
    command: &'static str,
    started: SystemTime,
    clock: Instant,
}

impl Metadata {
    pub fn start(command: &'static str) -> Self {
        Metadata {
            command,
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    pub fn write(self, dir: &Path, files: &[&str]) -> anyhow::Result<()> {
        let secs = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        write_json(
            &dir.join("metadata.json"),
            &json!({
                "command": self.command,
                "version": env!("CARGO_PKG_VERSION"),
                "started_unix": secs(self.started),
                "elapsed_seconds": self.clock.elapsed().as_secs_f64(),
                "threads": rayon_threads(),
                "files": files,
            }),
        )
    }
}

fn rayon_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Validation(_) => "validation",
        Error::InvalidArgument(_) => "invalid_argument",
        Error::RankDeficient(_) => "rank_deficient",
        Error::Separation(_) => "separation",
        Error::NotConverged(_) => "not_converged",
        Error::Singular(_) => "singular",
        Error::LinkMismatch(_) => "link_mismatch",
        Error::BootstrapFailed(_) => "bootstrap_failed",
        Error::Csv(_) => "csv",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

pub fn report_error(kind: &str, message: &str, details: &[String]) {
    let report = json!({ "error": { "kind": kind, "message": message, "details": details } });
    eprintln!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
}

pub fn report_failure(e: &anyhow::Error) {
    match e.downcast_ref::<Error>() {
        Some(core) => {
            let details = match core {
                Error::Validation(list) => list.clone(),
                _ => e.chain().skip(1).map(|c| c.to_string()).collect(),
            };
            report_error(error_kind(core), &e.to_string(), &details);
        }
        None => {
            let details: Vec<String> = e.chain().skip(1).map(|c| c.to_string()).collect();
            report_error("runtime", &e.to_string(), &details);
        }
    }
}
