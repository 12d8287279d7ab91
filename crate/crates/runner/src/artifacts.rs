//! Run outputs: checks, metrics, CSV tables, the JSON summary and the manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::RunnerError;

/// How a check's threshold was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    /// Closed-form value the numerics must reproduce.
    Analytic,
    /// Sampling statistic compared against its expected fluctuation.
    Statistical,
    /// Independent computation of the same quantity.
    Oracle,
    /// Conservation law or structural property.
    Invariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    #[serde(rename = "<")]
    Below,
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">")]
    Above,
}

impl std::fmt::Display for Comparison {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Comparison::Below => "<",
            Comparison::AtMost => "<=",
            Comparison::Above => ">",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
    pub value: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: &str, kind: CheckKind, value: f64, comparison: Comparison, threshold: f64) -> Self {
        let passed = match comparison {
            Comparison::Below => value < threshold,
            Comparison::AtMost => value <= threshold,
            Comparison::Above => value > threshold,
        };
        Check {
            name: name.to_string(),
            kind,
            value,
            comparison,
            threshold,
            passed,
        }
    }

    pub fn below(name: &str, kind: CheckKind, value: f64, threshold: f64) -> Self {
        Self::new(name, kind, value, Comparison::Below, threshold)
    }

    pub fn at_most(name: &str, kind: CheckKind, value: f64, threshold: f64) -> Self {
        Self::new(name, kind, value, Comparison::AtMost, threshold)
    }

    pub fn above(name: &str, kind: CheckKind, value: f64, threshold: f64) -> Self {
        Self::new(name, kind, value, Comparison::Above, threshold)
    }

    /// Passes when `holds`; the value is 1 for a violation and 0 otherwise.
    pub fn holds(name: &str, kind: CheckKind, holds: bool) -> Self {
        Self::at_most(name, kind, if holds { 0.0 } else { 1.0 }, 0.0)
    }
}

/// Plain comma-separated table with full-precision floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            text: format!("{}\n", header.join(",")),
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.columns);
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            match c {
                Cell::F(x) => write!(self.text, "{x:?}").unwrap(),
                Cell::I(n) => write!(self.text, "{n}").unwrap(),
                Cell::S(s) => self.text.push_str(s),
            }
        }
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::I(n as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::S(s.to_string())
    }
}

/// What an experiment hands back to the runner.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub cap_triggers: u64,
    pub files: Vec<(String, Vec<u8>)>,
}

impl Report {
    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    pub fn check(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a> {
    pub experiment: &'static str,
    pub seed: u64,
    pub versions: BTreeMap<&'static str, &'static str>,
    pub config: &'a ExperimentConfig,
    pub metrics: &'a BTreeMap<String, f64>,
    pub checks: &'a [Check],
    pub node_cap_triggers: u64,
    pub all_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Outcome of a completed run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub all_passed: bool,
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, f64>,
    pub manifest: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes the config echo, data files, `summary.json` and `manifest.json`.
pub fn write_run(out: &Path, config: &ExperimentConfig, report: Report) -> Result<RunArtifacts, RunnerError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| RunnerError::Io { path, source }
    };
    fs::create_dir_all(out).map_err(io(out))?;

    let mut files: Vec<(String, Vec<u8>)> = vec![("config.toml".into(), config.to_toml()?.into_bytes())];
    let all_passed = report.all_passed();
    let summary = Summary {
        experiment: config.experiment.name(),
        seed: config.seed,
        versions: BTreeMap::from([
            ("bohmian-core", bohmian_core::VERSION),
            ("bohmian-runner", env!("CARGO_PKG_VERSION")),
        ]),
        config,
        metrics: &report.metrics,
        checks: &report.checks,
        node_cap_triggers: report.cap_triggers,
        all_passed,
    };
    let mut json = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    json.push(b'\n');
    files.push(("summary.json".into(), json));
    files.extend(report.files);
    files.sort_by(|a, b| a.0.cmp(&b.0));

    let mut manifest = Vec::with_capacity(files.len());
    for (name, bytes) in &files {
        let path = out.join(name);
        fs::write(&path, bytes).map_err(io(&path))?;
        manifest.push(ManifestEntry {
            path: name.clone(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
    }
    let mut text = serde_json::to_vec_pretty(&serde_json::json!({ "files": manifest })).expect("manifest serializes");
    text.push(b'\n');
    let path = out.join("manifest.json");
    fs::write(&path, text).map_err(io(&path))?;

    Ok(RunArtifacts {
        all_passed,
        checks: report.checks,
        metrics: report.metrics,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparisons() {
        assert!(Check::below("a", CheckKind::Invariant, 1.0, 2.0).passed);
        assert!(!Check::below("a", CheckKind::Invariant, 2.0, 2.0).passed);
        assert!(Check::at_most("a", CheckKind::Invariant, 2.0, 2.0).passed);
        assert!(!Check::above("a", CheckKind::Invariant, f64::NAN, 0.0).passed);
        assert!(!Check::below("a", CheckKind::Invariant, f64::NAN, 1.0).passed);
        assert!(!Check::holds("a", CheckKind::Invariant, false).passed);
    }

    #[test]
    fn csv_floats_round_trip() {
        let mut c = Csv::new(&["x", "n"]);
        let x = 0.1 + 0.2;
        c.row(&[x.into(), 3usize.into()]);
        let text = String::from_utf8(c.into_bytes()).unwrap();
        let cell = text.lines().nth(1).unwrap().split(',').next().unwrap();
        assert_eq!(cell.parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
