//! Experiment runner: configuration, dispatch, reports and CSV tables.

pub mod catalog;
pub mod config;
mod experiments;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use catalog::{catalog_lookup, CatalogFn, CATALOG_NAMES};
pub use config::{Experiment, ExperimentConfig, Plan, Tolerances, DEFAULT_SEED};
pub use crate::regularity::Verdict;

use crate::error::{Error, Result};

/// Plot-ready table written as `<name>.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, headers: &[&str]) -> Self {
        Table {
            name: name.into(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|v| v.to_string()).collect());
    }

    pub fn push_text(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Io(e.to_string()))?;
        w.write_record(&self.headers).map_err(|e| Error::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(path)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    /// Resolved configuration; re-running it reproduces the metrics.
    pub config: BTreeMap<String, toml::Value>,
    pub metrics: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, Verdict>,
    pub wall_time_s: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub details: serde_json::Value,
}

/// Metrics, verdicts and tables produced by one experiment.
#[derive(Debug, Default)]
pub struct Outcome {
    pub metrics: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, Verdict>,
    pub tables: Vec<Table>,
    pub details: serde_json::Map<String, serde_json::Value>,
}

impl Outcome {
    pub fn metric(&mut self, k: impl Into<String>, v: f64) {
        self.metrics.insert(k.into(), v);
    }

    pub fn verdict(&mut self, k: impl Into<String>, pass: bool, value: f64, tolerance: f64, rule: &str) {
        self.verdicts.insert(
            k.into(),
            Verdict {
                pass,
                value,
                tolerance,
                rule: rule.into(),
            },
        );
    }

    pub fn detail<T: Serialize>(&mut self, k: &str, v: &T) {
        self.details
            .insert(k.to_string(), serde_json::to_value(v).unwrap_or(serde_json::Value::Null));
    }
}

/// Runs the experiment without touching the disk.
pub fn execute(cfg: &ExperimentConfig) -> (RunReport, Vec<Table>) {
    let start = Instant::now();
    let mut out = Outcome::default();
    let error = experiments::dispatch(cfg, &mut out).err().map(|e| e.to_string());
    if let Some(e) = &error {
        if !out.verdicts.values().any(|v| !v.pass) {
            out.verdict("execution", false, f64::NAN, 0.0, &format!("experiment completes without error: {e}"));
        }
    }
    let pass = error.is_none() && out.verdicts.values().all(|v| v.pass);
    let report = RunReport {
        experiment: cfg.experiment.name().to_string(),
        config: cfg.echo.clone(),
        metrics: out.metrics,
        verdicts: out.verdicts,
        wall_time_s: start.elapsed().as_secs_f64(),
        pass,
        error,
        details: serde_json::Value::Object(out.details),
    };
    (report, out.tables)
}

/// Runs the experiment and writes `report.json` and the CSV tables into the
/// configured output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let (report, tables) = execute(cfg);
    std::fs::create_dir_all(&cfg.output)?;
    for t in &tables {
        t.write(&cfg.output)?;
    }
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(cfg.output.join("report.json"), json)?;
    Ok(report)
}

/// Parses, validates and runs a config file.
pub fn run_file(path: &Path) -> Result<RunReport> {
    run(&ExperimentConfig::from_file(path)?)
}

/// Process exit status: 0 pass, 1 verdict failure, 2 config error.
pub fn exit_code(r: &Result<RunReport>) -> i32 {
    match r {
        Ok(rep) if rep.pass => 0,
        Ok(_) => 1,
        Err(Error::Config(_)) => 2,
        Err(_) => 1,
    }
}
