//! Experiment runner: reads a TOML configuration, runs one experiment and writes
//! CSV tables plus a JSON manifest.

pub mod config;
mod experiments;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;

pub use config::ExperimentConfig;
pub use experiments::{prepare, Outcome, Prepared};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error("{context}: {source}")]
    Solver {
        context: String,
        source: dinilab::Error,
    },
    #[error("{0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Solver { .. } => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    config: &'a ExperimentConfig,
    config_hash: &'a str,
    versions: Versions,
    started_unix_seconds: u64,
    wall_time_seconds: f64,
    outputs: Vec<String>,
    summary: &'a serde_json::Value,
    check: &'a experiments::Check,
}

#[derive(Serialize)]
struct Versions {
    dinilab: &'static str,
}

/// Where a run writes, given the file setting and overrides.
pub fn output_dir(config: &ExperimentConfig) -> PathBuf {
    config
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Result of a completed run.
#[derive(Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub check_passed: bool,
    pub check_detail: String,
}

/// Validates, runs and writes reports. Nothing is written unless the experiment succeeds.
pub fn run(path: &Path, overrides: &Overrides) -> Result<RunSummary, RunError> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(dir) = &overrides.output_dir {
        config.output_dir = Some(dir.clone());
    }
    run_config(config)
}

pub fn run_config(config: ExperimentConfig) -> Result<RunSummary, RunError> {
    config.validate()?;
    let prepared = prepare(&config)?;
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let outcome = experiments::execute(&prepared)?;
    let wall = clock.elapsed().as_secs_f64();
    let hash = config.hash();

    let dir = output_dir(&config);
    std::fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    for (name, body) in &outcome.tables {
        let path = dir.join(name);
        std::fs::write(&path, with_hash_column(body, &hash))?;
        files.push(path);
    }
    let manifest = Manifest {
        experiment: &config.experiment,
        config: &config,
        config_hash: &hash,
        versions: Versions {
            dinilab: env!("CARGO_PKG_VERSION"),
        },
        started_unix_seconds: started,
        wall_time_seconds: wall,
        outputs: outcome.tables.iter().map(|(n, _)| n.clone()).collect(),
        summary: &outcome.summary,
        check: &outcome.check,
    };
    let path = dir.join("manifest.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    files.push(path);
    Ok(RunSummary {
        output_dir: dir,
        files,
        check_passed: outcome.check.passed,
        check_detail: outcome.check.detail.clone(),
    })
}

/// Appends a `config_hash` column to every line of a CSV body.
pub fn with_hash_column(body: &str, hash: &str) -> String {
    let mut out = String::with_capacity(body.len() + body.lines().count() * (hash.len() + 1));
    for (k, line) in body.lines().enumerate() {
        out.push_str(line);
        out.push(',');
        out.push_str(if k == 0 { "config_hash" } else { hash });
        out.push('\n');
    }
    out
}

/// Catalog of experiments, fields, data and configuration keys.
///
/// Section headers are bracketed; schema lines read `key: type: default`.
pub fn list_catalog() -> String {
    let mut out = String::new();
    let mut section = |title: &str, names: &[&str]| {
        out.push_str(&format!("[{title}]\n"));
        for n in names {
            out.push_str(n);
            out.push('\n');
        }
    };
    section("experiments", &config::EXPERIMENTS);
    section("fields", &config::FIELDS);
    section("data", &config::DATA);
    section("forms", &config::FORMS);
    section("moduli", &config::MODULI);
    for (title, rows) in config::schema() {
        out.push_str(&format!("[schema {title}]\n"));
        for (key, ty, default) in rows {
            out.push_str(&format!("{key}: {ty}: {default}\n"));
        }
    }
    out
}
