//! Per-command run manifest. It records what was run, with which
//! configuration and seed, when, and which files came out of it.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::trainer::ExperimentConfig;

use super::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full argument vector, program name excluded.
    pub args: Vec<String>,
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: Option<f64>,
    pub outputs: Vec<String>,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn start(command: &str, args: &[String], config: &ExperimentConfig, master_seed: u64) -> Self {
        Self {
            command: command.to_string(),
            args: args.to_vec(),
            config: config.clone(),
            master_seed,
            version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            started: now(),
            finished: None,
            outputs: Vec::new(),
        }
    }

    pub fn add_outputs<I: IntoIterator<Item = PathBuf>>(&mut self, paths: I) {
        self.outputs.extend(paths.into_iter().map(|p| p.display().to_string()));
    }

    pub fn finish(&mut self) {
        self.finished = Some(now());
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Stamps the end time and writes `manifest.json` into `dir`.
    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        self.finish();
        let path = dir.join(MANIFEST_FILE);
        std::fs::create_dir_all(dir)?;
        std::fs::write(&path, self.to_json()?)?;
        Ok(path)
    }
}
