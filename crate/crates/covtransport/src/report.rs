//! `report.json`: what was run, with which settings, and what came out.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::io::IoError;

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Echo of every setting that influenced the run.
    pub config: Value,
    pub results: Value,
    pub warnings: Vec<String>,
    /// Wall-clock seconds per phase. The only non-deterministic field.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(command: &str, seed: Option<u64>, config: Value) -> Self {
        RunReport {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            results: Value::Null,
            warnings: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    /// The report as JSON without `timings`, for reproducibility checks.
    pub fn deterministic_payload(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("report is serializable");
        if let Value::Object(map) = &mut v {
            map.remove("timings");
        }
        v
    }
}

/// Writes `dir/report.json`, creating `dir` if needed.
pub fn write_report(report: &RunReport, dir: impl AsRef<Path>) -> Result<PathBuf, IoError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let path = dir.join(REPORT_FILE);
    let mut text = serde_json::to_string_pretty(report).map_err(|source| IoError::Json {
        path: path.clone(),
        source,
    })?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| IoError::io(&path, e))?;
    Ok(path)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<RunReport, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}
