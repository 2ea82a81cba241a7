//! Run reports, manifests and file output.
//!
//! Reports are deterministic functions of the config and the code version;
//! wall-clock time lives in a separate `timing.json`.

use std::fs;
use std::path::PathBuf;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::LabError;

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Serialize)]
pub struct RunReport<S: Serialize> {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    /// Whether every checked statistic met its tolerance.
    pub passed: bool,
    pub summary: S,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
struct Timing<'a> {
    command: &'a str,
    wall_clock_seconds: f64,
}

/// Collects every file written by a command, relative to the output dir.
#[derive(Debug)]
pub struct Output {
    root: PathBuf,
    files: Vec<String>,
}

impl Output {
    pub fn create(root: PathBuf) -> Result<Self, LabError> {
        fs::create_dir_all(&root).map_err(|source| LabError::Io { path: root.clone(), source })?;
        Ok(Output { root, files: Vec::new() })
    }

    pub fn write(&mut self, relative: &str, contents: &[u8]) -> Result<(), LabError> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| LabError::Io { path: parent.to_path_buf(), source })?;
        }
        fs::write(&path, contents).map_err(|source| LabError::Io { path, source })?;
        self.files.push(relative.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, relative: &str, value: &T) -> Result<(), LabError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| LabError::Config(format!("cannot serialize {relative}: {e}")))?;
        text.push('\n');
        self.write(relative, text.as_bytes())
    }

    /// Writes `manifest.json` (listing every file so far) and `timing.json`.
    pub fn finish(mut self, command: &str, config_sha256: &str, seconds: f64) -> Result<(), LabError> {
        let mut files = self.files.clone();
        files.sort();
        let manifest = Manifest {
            command: command.into(),
            version: VERSION.into(),
            config_sha256: config_sha256.into(),
            files,
        };
        self.write_json("manifest.json", &manifest)?;
        self.write_json("timing.json", &Timing { command, wall_clock_seconds: seconds })
    }
}

/// 17 significant digits, matching the CSV writers.
pub fn fmt17(v: f64) -> String {
    fgp_core::market::fmt17(v)
}
