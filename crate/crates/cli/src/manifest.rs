use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Serialize)]
pub struct DatasetInfo {
    pub path: PathBuf,
    pub format: String,
    /// FNV-1a 64 of the raw file bytes.
    pub checksum: String,
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
}

/// Everything needed to re-run a command. Wall-clock fields live under
/// `timestamps` and are the only part that changes between identical runs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub args: Vec<String>,
    pub config: Value,
    pub seeds: Value,
    pub dataset: Option<DatasetInfo>,
    pub outputs: Vec<PathBuf>,
    pub timestamps: Timestamps,
}

#[derive(Debug, Serialize)]
pub struct Timestamps {
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seeds: Value, started_unix: u64) -> Self {
        RunManifest {
            tool: "anonrec",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            config,
            seeds,
            dataset: None,
            outputs: Vec::new(),
            timestamps: Timestamps {
                started_unix,
                finished_unix: 0,
            },
        }
    }

    /// Writes `<output>.manifest.json` next to `output`.
    pub fn write_beside(mut self, output: &Path) -> Result<PathBuf> {
        self.timestamps.finished_unix = now_unix();
        let mut name = output
            .file_name()
            .map(|n| n.to_os_string())
            .unwrap_or_default();
        name.push(".manifest.json");
        let path = output.with_file_name(name);
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
