//! Parameter checkpoints: a JSON manifest next to a little-endian `f64`
//! blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::params::{NetworkParams, ParamLayout, TensorInfo};
use super::spec::SystemSpec;
use crate::error::{Error, Result};
use crate::persist::{atomic_write, sha256_hex};

pub const CHECKPOINT_FORMAT: &str = "tdse-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub spec: SystemSpec,
    /// Canonical tensor order with offsets into the blob.
    pub tensors: Vec<TensorInfo>,
    pub n_params: usize,
    pub seed: u64,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    pub blob_sha256: String,
    #[serde(default)]
    pub config_hash: Option<String>,
    /// Time range `[t0, t1]` over which these parameters are valid.
    #[serde(default)]
    pub time_range: Option<(f64, f64)>,
    #[serde(default)]
    pub code_version: Option<String>,
}

pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub params: NetworkParams,
}

fn blob_path(manifest_path: &Path, blob: &str) -> PathBuf {
    manifest_path
        .parent()
        .map(|p| p.join(blob))
        .unwrap_or_else(|| PathBuf::from(blob))
}

/// Writes `<stem>.json` and `<stem>.bin` under `dir`; returns the manifest
/// path.
pub fn save_checkpoint(
    dir: &Path,
    stem: &str,
    spec: &SystemSpec,
    params: &NetworkParams,
    seed: u64,
    config_hash: Option<String>,
    time_range: Option<(f64, f64)>,
) -> Result<PathBuf> {
    let mut bytes = Vec::with_capacity(params.len() * 8);
    for x in &params.data {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    let blob = format!("{stem}.bin");
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.to_string(),
        spec: spec.clone(),
        tensors: params.layout.tensors.clone(),
        n_params: params.len(),
        seed,
        blob: blob.clone(),
        blob_sha256: sha256_hex(&bytes),
        config_hash,
        time_range,
        code_version: Some(env!("CARGO_PKG_VERSION").to_string()),
    };
    let path = dir.join(format!("{stem}.json"));
    atomic_write(&dir.join(&blob), &bytes)?;
    atomic_write(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(path)
}

/// Loads and validates a checkpoint against its own spec.
pub fn load_checkpoint(manifest_path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(manifest_path)?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(Error::CheckpointMismatch(format!(
            "unknown checkpoint format {:?}",
            manifest.format
        )));
    }
    let layout = ParamLayout::for_spec(&manifest.spec);
    if layout.tensors != manifest.tensors {
        return Err(Error::CheckpointMismatch(shape_diff(&layout.tensors, &manifest.tensors)));
    }
    let bytes = fs::read(blob_path(manifest_path, &manifest.blob))?;
    if sha256_hex(&bytes) != manifest.blob_sha256 {
        return Err(Error::CheckpointMismatch("parameter blob hash mismatch".into()));
    }
    if bytes.len() != 8 * manifest.n_params {
        return Err(Error::CheckpointMismatch(format!(
            "blob holds {} bytes, manifest declares {} parameters",
            bytes.len(),
            manifest.n_params
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let params = NetworkParams::from_vec(layout, data)?;
    Ok(Checkpoint { manifest, params })
}

/// Loads a checkpoint and refuses it unless its network matches `spec`.
pub fn load_checkpoint_for(manifest_path: &Path, spec: &SystemSpec) -> Result<Checkpoint> {
    let ck = load_checkpoint(manifest_path)?;
    if &ck.manifest.spec != spec {
        let want = ParamLayout::for_spec(spec);
        let mut msg = shape_diff(&want.tensors, &ck.manifest.tensors);
        if msg.is_empty() {
            msg = "system spec differs from the requested one".into();
        }
        return Err(Error::CheckpointMismatch(msg));
    }
    Ok(ck)
}

/// Human-readable differences between two tensor tables.
pub fn shape_diff(want: &[TensorInfo], got: &[TensorInfo]) -> String {
    let mut lines = Vec::new();
    for w in want {
        match got.iter().find(|g| g.name == w.name) {
            None => lines.push(format!("missing {} ({}x{})", w.name, w.rows, w.cols)),
            Some(g) if (g.rows, g.cols) != (w.rows, w.cols) => lines.push(format!(
                "{}: expected {}x{}, found {}x{}",
                w.name, w.rows, w.cols, g.rows, g.cols
            )),
            _ => {}
        }
    }
    for g in got {
        if !want.iter().any(|w| w.name == g.name) {
            lines.push(format!("unexpected {} ({}x{})", g.name, g.rows, g.cols));
        }
    }
    lines.join("; ")
}
