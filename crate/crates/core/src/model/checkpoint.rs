//! On-disk model format: `<stem>.json` manifest plus `<stem>.bin` blob.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelError, PrismConfig, PrismModel, Result};
use crate::numcore::{Precision, Scalar, Tensor};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub config: PrismConfig,
    pub precision: Precision,
    pub params: Vec<ParamEntry>,
    /// Hex sha256 of the blob.
    pub content_hash: String,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    /// Free-form extras such as the data scaler used in training.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

fn ckpt_err(path: &Path, msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

pub fn encode_params<T: Scalar>(model: &PrismModel<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(model.n_scalars() * T::BYTES);
    for p in model.params() {
        for &v in p.value.data() {
            v.write_le(&mut out);
        }
    }
    out
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Manifest path for `stem` inside `dir`.
pub fn manifest_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.json"))
}

/// Writes the model as `dir/<stem>.json` and `dir/<stem>.bin`.
pub fn save_checkpoint<T: Scalar>(
    model: &PrismModel<T>,
    dir: &Path,
    stem: &str,
    metadata: BTreeMap<String, serde_json::Value>,
) -> Result<CheckpointManifest> {
    fs::create_dir_all(dir)?;
    let blob = encode_params(model);
    let blob_name = format!("{stem}.bin");
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        config: model.config().clone(),
        precision: T::PRECISION,
        params: model
            .params()
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect(),
        content_hash: content_hash(&blob),
        blob: blob_name.clone(),
        metadata,
    };
    fs::write(dir.join(&blob_name), &blob)?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(manifest_path(dir, stem), json + "\n")?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<CheckpointManifest> {
    let text = fs::read_to_string(path).map_err(|e| ckpt_err(path, e.to_string()))?;
    let m: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| ckpt_err(path, format!("invalid manifest: {e}")))?;
    if m.format_version != FORMAT_VERSION {
        return Err(ckpt_err(
            path,
            format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                m.format_version
            ),
        ));
    }
    Ok(m)
}

fn decode<S: Scalar, T: Scalar>(bytes: &[u8], entries: &[ParamEntry]) -> Vec<Tensor<T>> {
    let mut off = 0;
    entries
        .iter()
        .map(|e| {
            let n: usize = e.shape.iter().product();
            let data: Vec<T> = (0..n)
                .map(|i| T::from_f64(S::read_le(&bytes[off + i * S::BYTES..]).to_f64()))
                .collect();
            off += n * S::BYTES;
            Tensor::new(e.shape.clone(), data).expect("sized")
        })
        .collect()
}

/// Loads a checkpoint, converting to precision `T` if it was stored in the other one.
pub fn load_checkpoint<T: Scalar>(manifest: &Path) -> Result<(PrismModel<T>, CheckpointManifest)> {
    let m = read_manifest(manifest)?;
    let blob_path = manifest.parent().unwrap_or(Path::new(".")).join(&m.blob);
    let bytes = fs::read(&blob_path).map_err(|e| ckpt_err(&blob_path, e.to_string()))?;
    let hash = content_hash(&bytes);
    if hash != m.content_hash {
        return Err(ckpt_err(
            &blob_path,
            format!("content hash mismatch: manifest {}, blob {hash}", m.content_hash),
        ));
    }
    let expected = super::param_shapes(&m.config);
    let listed: Vec<(String, Vec<usize>)> = m.params.iter().map(|p| (p.name.clone(), p.shape.clone())).collect();
    if expected != listed {
        return Err(ckpt_err(manifest, "parameter list does not match the stored config"));
    }
    let n: usize = m.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    let width = m.precision.bits() as usize / 8;
    if bytes.len() != n * width {
        return Err(ckpt_err(
            &blob_path,
            format!("blob has {} bytes, expected {}", bytes.len(), n * width),
        ));
    }
    let values = match m.precision {
        Precision::F32 => decode::<f32, T>(&bytes, &m.params),
        Precision::F64 => decode::<f64, T>(&bytes, &m.params),
    };
    let model = PrismModel::from_params(m.config.clone(), values)?;
    Ok((model, m))
}
