use std::path::Path;

use prism::model::{PrismConfig, Variant};
use prism::training::{DatasetOptions, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything `train`, `ablate` and `evaluate` need besides the data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: PrismConfig,
    pub train: TrainConfig,
    pub data: DatasetOptions,
    pub ablation: AblationSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSettings {
    pub seeds: Vec<u64>,
    /// Variant labels as printed in reports.
    pub variants: Vec<String>,
    pub threads: usize,
}

impl Default for AblationSettings {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2],
            variants: Variant::ALL.iter().map(|v| v.label().to_string()).collect(),
            threads: 1,
        }
    }
}

impl AblationSettings {
    pub fn resolve_variants(&self) -> Result<Vec<Variant>, CliError> {
        self.variants
            .iter()
            .map(|s| {
                Variant::from_label(s).ok_or_else(|| {
                    let known: Vec<&str> = Variant::ALL.iter().map(|v| v.label()).collect();
                    CliError::Input(format!("unknown variant {s:?}; expected one of {}", known.join(", ")))
                })
            })
            .collect()
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.train.validate()?;
        self.data.split.validate()?;
        if self.ablation.seeds.is_empty() {
            return Err(CliError::Input("ablation.seeds must not be empty".into()));
        }
        self.ablation.resolve_variants()?;
        Ok(())
    }
}

/// Parses a JSON document, reporting the line and column of syntax errors.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Input(format!(
            "{}: invalid JSON at line {} column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

pub fn load_run_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => read_json(p),
        None => Ok(RunConfig::default()),
    }
}
