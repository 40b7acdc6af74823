//! JSON records exchanged between subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use liquidsense::pipeline::ProcessOutput;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    NoPeak,
    Error,
}

/// One processed trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub file: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f_up: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f_down: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f_resonance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub quality: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub antenna_pair: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
}

impl EstimateRecord {
    pub fn ok(file: String, out: &ProcessOutput) -> Self {
        Self {
            file,
            status: Status::Ok,
            f_up: Some(out.estimate.f_up),
            f_down: Some(out.estimate.f_down),
            f_resonance: Some(out.estimate.f_resonance),
            quality: Some(out.estimate.quality),
            antenna_pair: Some(out.antenna_pair),
            message: None,
        }
    }

    pub fn failed(file: String, status: Status, message: String) -> Self {
        Self {
            file,
            status,
            f_up: None,
            f_down: None,
            f_resonance: None,
            quality: None,
            antenna_pair: None,
            message: Some(message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Prediction {
    Continuous { level_ml: f64, out_of_range: bool },
    Discrete { class: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub file: String,
    pub f_resonance: f64,
    #[serde(flatten)]
    pub prediction: Prediction,
}

/// Reads a JSON file; malformed content is a usage error carrying the
/// parser's line and column.
pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid {what} {}: {e}", path.display())))
}

pub fn to_pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Canonical form for matching file names across records and manifests.
pub fn path_key(p: &Path) -> PathBuf {
    fs::canonicalize(p).or_else(|_| std::path::absolute(p)).unwrap_or_else(|_| p.to_path_buf())
}
