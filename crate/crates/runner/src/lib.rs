//! Configuration-driven experiment runner.
//!
//! Each run reads a TOML config, executes one preset experiment and writes a
//! self-describing output directory:
//!
//! - `config.toml`, the fully resolved configuration;
//! - `summary.json` with metrics, checks, seed, versions and node-cap triggers;
//! - plot-ready CSV files;
//! - `manifest.json` listing every file with its size and SHA-256 digest.

// Range checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod catalog;
pub mod config;
pub mod error;
pub mod experiments;

use std::path::{Path, PathBuf};

pub use artifacts::{Check, CheckKind, ManifestEntry, RunArtifacts};
pub use catalog::{list_experiments, CatalogEntry, ExperimentKind};
pub use config::ExperimentConfig;
pub use error::RunnerError;

/// Environment variable naming the directory used when `--out` is omitted.
pub const OUT_ROOT_VAR: &str = "BOHMIAN_OUT_ROOT";

/// Reads and resolves a config file.
pub fn load_config(
    path: &Path,
    overrides: &[(String, String)],
    seed: Option<u64>,
) -> Result<ExperimentConfig, RunnerError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunnerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ExperimentConfig::load(&text, overrides, seed)
}

/// Runs the experiment described by `config` and writes its artifacts to `out`.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<RunArtifacts, RunnerError> {
    let report = config.params.run(config.seed)?;
    artifacts::write_run(out, config, report)
}

/// Checks a config file without running it.
pub fn validate(path: &Path) -> Result<ExperimentConfig, RunnerError> {
    load_config(path, &[], None)
}

/// `$BOHMIAN_OUT_ROOT/<experiment>-seed<seed>`, or `runs/...` when unset.
pub fn default_out_dir(config: &ExperimentConfig) -> PathBuf {
    let root = std::env::var_os(OUT_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    root.join(format!("{}-seed{}", config.experiment.name(), config.seed))
}
