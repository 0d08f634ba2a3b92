use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance of one command invocation, written into its output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// The argument vector, program name excluded.
    pub args: Vec<String>,
    /// Fully resolved configuration after flag overrides.
    pub config: serde_json::Value,
    /// sha256 of every input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    pub version: String,
    pub seed: Option<u64>,
    pub precision: Option<u32>,
    pub started_unix: u64,
    pub elapsed_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub struct ManifestBuilder {
    command: String,
    args: Vec<String>,
    inputs: BTreeMap<String, String>,
    started: SystemTime,
    clock: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            inputs: BTreeMap::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let hash = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    pub fn finish(
        self,
        out: &Path,
        config: impl Serialize,
        seed: Option<u64>,
        precision: Option<u32>,
    ) -> Result<RunManifest, CliError> {
        let m = RunManifest {
            command: self.command,
            args: self.args,
            config: serde_json::to_value(config).map_err(|e| CliError::Runtime(e.to_string()))?,
            inputs: self.inputs,
            version: format!("prism {}", env!("CARGO_PKG_VERSION")),
            seed,
            precision,
            started_unix: self
                .started
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            elapsed_seconds: self.clock.elapsed().as_secs_f64(),
        };
        write_json(&out.join(MANIFEST_FILE), &m)?;
        Ok(m)
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}
