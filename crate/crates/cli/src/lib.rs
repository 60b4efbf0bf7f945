//! Configuration-driven experiment runner for `tailclust`.

pub mod config;
pub mod experiments;

use std::path::{Path, PathBuf};

use serde_json::json;

pub use config::ExperimentConfig;
pub use experiments::{lookup, Experiment, CATALOG};

/// Catalog lines: name, description and the result each experiment checks.
pub fn list_experiments() -> Vec<(&'static str, &'static str, &'static str)> {
    CATALOG.iter().map(|e| (e.name, e.description, e.anchor)).collect()
}

#[derive(Debug)]
pub enum RunError {
    /// Bad invocation or configuration; nothing was written.
    Config(String),
    /// The experiment itself failed to run.
    Runtime(String),
}

/// Parses, resolves and runs one experiment, writing `report.json` (and any
/// CSVs) under `out_dir`. Returns whether every pass flag held.
pub fn run_experiment(
    experiment: &str,
    config_text: &str,
    seed: Option<u64>,
    out_dir: Option<&Path>,
    default_out: &Path,
) -> Result<(bool, PathBuf), RunError> {
    let cfg = ExperimentConfig::parse(config_text).map_err(RunError::Config)?;
    if cfg.experiment != experiment {
        return Err(RunError::Config(format!(
            "experiment: config names {:?} but {:?} was requested",
            cfg.experiment, experiment
        )));
    }
    let cfg = experiments::resolve(cfg, seed);
    experiments::validate(&cfg).map_err(|e| RunError::Config(format!("{e:#}")))?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| default_out.to_path_buf());
    let outcome = experiments::run(&cfg).map_err(|e| RunError::Runtime(format!("{e:#}")))?;
    let anchor = lookup(experiment).map(|e| e.anchor).unwrap_or_default();
    let report = json!({
        "experiment": experiment,
        "anchor": anchor,
        "config": cfg,
        "pass": outcome.pass,
        "results": outcome.results,
    });
    experiments::write_outputs(&dir, &report, &outcome.files).map_err(|e| RunError::Runtime(format!("{e:#}")))?;
    Ok((outcome.pass, dir))
}
