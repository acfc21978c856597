//! Deterministic experiment runner for the `probtaylor` library.
//!
//! Every run writes its data files plus `manifest.json` into one output
//! directory. Numbers are written with 17 significant digits.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod output;
pub mod overrides;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use error::{CliError, CliResult};
use output::{FileEntry, OutputDir};
use overrides::Overrides;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    PosteriorDemo,
    Tracking,
    Logistic,
    FitzhughNagumo,
    Convergence,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::PosteriorDemo,
        Experiment::Tracking,
        Experiment::Logistic,
        Experiment::FitzhughNagumo,
        Experiment::Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::PosteriorDemo => "posterior-demo",
            Experiment::Tracking => "tracking",
            Experiment::Logistic => "logistic",
            Experiment::FitzhughNagumo => "fitzhugh-nagumo",
            Experiment::Convergence => "convergence",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| CliError::Validation(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub overrides: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            experiment,
            seed,
            output_dir: output_dir.into(),
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_override(mut self, key: &str, value: impl ToString) -> Self {
        self.overrides.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub overrides: BTreeMap<String, String>,
    pub version: String,
    pub runtime_seconds: f64,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// What an experiment reports back besides its files.
#[derive(Debug, Default)]
pub struct ExperimentReport {
    pub summary: Vec<String>,
    /// Set when the run completed but a numerical check did not hold.
    pub failure: Option<CliError>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub report: ExperimentReport,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.report.failure.as_ref().map_or(0, CliError::exit_code)
    }
}

/// Runs one experiment. Configuration errors are reported before anything is
/// written; the manifest is written once all data files exist.
pub fn run(config: &ExperimentConfig) -> CliResult<RunOutcome> {
    let start = Instant::now();
    let mut ov = Overrides::new(config.overrides.clone());
    let plan = experiments::plan(config.experiment, &mut ov)?;
    ov.finish()?;
    let mut out = OutputDir::create(&config.output_dir)?;
    let report = plan.execute(config.seed, &mut out)?;
    let manifest = RunManifest {
        experiment: config.experiment,
        seed: config.seed,
        output_dir: config.output_dir.clone(),
        overrides: config.overrides.clone(),
        version: VERSION.to_string(),
        runtime_seconds: start.elapsed().as_secs_f64(),
        files: out.hashes()?,
    };
    let path = config.output_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(RunOutcome { manifest, report })
}
