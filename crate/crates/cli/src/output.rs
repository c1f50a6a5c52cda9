//! Artifact types, file helpers and the machine-readable error.

use std::fs;
use std::path::{Path, PathBuf};

use robustfit_core::inference::SigmaConvention;
use robustfit_core::{EpidemicSeries, FitOptions, FitResult, InferenceReport};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.to_string(),
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new("invalid_config", message)
    }

    pub fn report(&self) {
        let body = serde_json::json!({"error": {"kind": self.kind, "message": self.message}});
        eprintln!("{body}");
    }
}

impl From<robustfit_core::Error> for CliError {
    fn from(e: robustfit_core::Error) -> Self {
        Self::new(e.kind(), e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new("json", e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

/// Everything needed to rerun the command that produced an artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub model: Option<String>,
    pub objective: Option<String>,
    /// Tsallis exponent; `None` for likelihood fits.
    pub gamma: Option<f64>,
    pub sigma_convention: SigmaConvention,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_options: Option<FitOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
}

impl Metadata {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            tool: "robustfit".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            model: None,
            objective: None,
            gamma: None,
            sigma_convention: SigmaConvention::default(),
            input: None,
            fit_options: None,
            level: None,
        }
    }

    /// Metadata for an artifact derived from a saved fit.
    pub fn derived(command: &str, doc: &FitDocument) -> Self {
        Self {
            command: command.into(),
            input: None,
            fit_options: None,
            level: None,
            ..doc.metadata.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputInfo {
    pub path: String,
    pub format: String,
    pub series: String,
    pub region: Option<String>,
    pub kind_override: Option<String>,
    pub transform: String,
    pub allow_gaps: bool,
    pub rows: usize,
}

/// The document written by `robustfit fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub metadata: Metadata,
    pub series: EpidemicSeries,
    pub fit: FitResult,
    pub inference: Option<InferenceReport>,
    #[serde(default)]
    pub inference_error: Option<String>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

pub fn read_fit(path: &Path) -> Result<FitDocument, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::new("json", format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

/// `dir/stem{suffix}.{ext}` next to `path`.
pub fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

pub fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::new("missing_input", format!("{what} `{}` does not exist", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sibling_keeps_directory() {
        let p = sibling(Path::new("out/fit.json"), "_density", "csv");
        assert_eq!(p, PathBuf::from("out/fit_density.csv"));
    }

    #[test]
    fn error_json_shape() {
        let e = CliError::from(robustfit_core::Error::InvalidConfig("x".into()));
        assert_eq!(e.kind, "invalid_config");
    }
}
