//! Config-driven runner for the riemstab experiment suite.
//!
//! A run reads one TOML document (see `RunConfig`), executes its experiments in
//! order and writes `report.json`, one CSV table per experiment and a
//! `replay.toml` holding the resolved configuration.

pub mod config;
pub mod error;
pub mod runner;

use std::fmt::Write;
use std::path::Path;

pub use config::{Resolved, RunConfig, CHART_PRESETS};
pub use error::CliError;
pub use runner::{execute, write_outputs, Failure, RunReport};

/// Default output directory when neither `--out` nor `out` is given.
pub const DEFAULT_OUT: &str = "riemstab-out";

/// Executes `resolved` on a pool of `jobs` threads (all cores when `None`) and
/// writes the outputs to `out`. Partial results are written even when some
/// experiments fail.
pub fn run(resolved: &Resolved, jobs: Option<usize>, out: &Path) -> Result<RunReport, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::invalid("--jobs", e.to_string()))?;
    let report = pool.install(|| execute(resolved));
    write_outputs(resolved, &report, out)?;
    Ok(report)
}

/// Chart and nonlinearity presets, one per line with their parameter docs.
/// Without built-ins only the aliases declared in the config are listed.
pub fn list_presets(resolved: Option<&Resolved>, builtins: bool) -> String {
    let registry = match resolved {
        Some(r) => r.registry.clone(),
        None if builtins => riemstab_core::system::Registry::with_builtins(),
        None => riemstab_core::system::Registry::empty(),
    };
    let mut s = String::new();
    if builtins {
        s.push_str("metric presets:\n");
        for (name, doc) in CHART_PRESETS {
            let _ = writeln!(s, "  {name:<22} {doc}");
        }
    }
    let mut entries = registry.list();
    if !builtins {
        let own: Vec<&str> = match resolved {
            Some(r) => r.config.presets.iter().map(|a| a.name.as_str()).collect(),
            None => Vec::new(),
        };
        entries.retain(|(name, _)| own.contains(&name.as_str()));
    }
    if !entries.is_empty() {
        s.push_str("nonlinearity presets:\n");
        for (name, doc) in entries {
            let _ = writeln!(s, "  {name:<22} {doc}");
        }
    }
    s
}
