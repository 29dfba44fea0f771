use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

/// Record of one command invocation, written once into its output directory
/// when the command ends. Timestamps appear here and nowhere else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// Effective settings after config files and flags.
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub exit_status: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: Value::Null,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started_at: Utc::now(),
            finished_at: None,
            exit_status: None,
            error: None,
        }
    }

    pub fn input(&mut self, key: &str, path: &Path) {
        self.inputs.insert(key.into(), path.display().to_string());
    }

    pub fn output(&mut self, key: &str, path: &Path) {
        self.outputs.insert(key.into(), path.display().to_string());
    }

    /// Stamps the end time and status and writes `run_manifest.json` into `dir`.
    pub fn finish(&mut self, dir: &Path, result: std::result::Result<(), &Error>) -> Result<()> {
        self.finished_at = Some(Utc::now());
        match result {
            Ok(()) => self.exit_status = Some(0),
            Err(e) => {
                self.exit_status = Some(e.exit_code());
                self.error = Some(e.to_string());
            }
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut json = serde_json::to_string_pretty(self).map_err(|e| Error::json("run manifest", e))?;
        json.push('\n');
        super::write_atomic(&dir.join(RUN_MANIFEST_FILE), json.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }
}
