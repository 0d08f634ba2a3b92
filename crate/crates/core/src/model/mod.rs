//! The forecaster: patch embedding, a stack of attention / primitive /
//! spectral / feed-forward layers, and a pooled MLP head.

pub mod checkpoint;
mod config;
mod network;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use config::{PrismConfig, Variant};
pub use network::{
    calendar_features, diversity_loss, normalize_instance, BandEnergy, Bound, EncoderDiagnostics, ForwardOptions,
    ForwardTrace, InstanceNorm, LayerDiagnostics, LayerTrace, PrimitiveTrace, PrismModel, SpectralTrace,
};
pub use params::{param_count, param_shapes, Param, DICT_INIT_STD};

use thiserror::Error;

use crate::numcore::NumError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
