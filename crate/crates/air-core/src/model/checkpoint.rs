//! Model checkpoints: a JSON manifest (method tag, full config, ordered
//! named parameter list) plus `params.bin`, the little-endian f64 blobs of
//! every parameter concatenated in manifest order.

use super::{build_unified_model, Model, ModelConfig};
use crate::error::ModelError;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    method: String,
    config: ModelConfig,
    params: Vec<ParamEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    /// Element offset into the f64 blob.
    offset: u64,
    len: u64,
}

pub fn save_model(model: &Model, dir: &Path) -> Result<(), ModelError> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    let mut offset = 0u64;
    model.visit_params(&mut |name, t| {
        entries.push(ParamEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
            len: t.numel() as u64,
        });
        offset += t.numel() as u64;
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    });
    let manifest = Manifest {
        format_version: CHECKPOINT_VERSION,
        method: model.config.method.as_str().to_string(),
        config: model.config.clone(),
        params: entries,
    };
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)
            .map_err(|e| ModelError::Checkpoint(e.to_string()))?,
    )?;
    fs::write(dir.join(PARAMS_FILE), blob)?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<Model, ModelError> {
    let manifest_text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest = serde_json::from_str(&manifest_text)
        .map_err(|e| ModelError::Checkpoint(format!("manifest parse failed: {e}")))?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            manifest.format_version
        )));
    }
    let blob = fs::read(dir.join(PARAMS_FILE))?;
    if blob.len() % 8 != 0 {
        return Err(ModelError::Checkpoint(format!(
            "params blob length {} is not a multiple of 8",
            blob.len()
        )));
    }
    let total: u64 = manifest.params.iter().map(|p| p.len).sum();
    if total * 8 != blob.len() as u64 {
        return Err(ModelError::Checkpoint(format!(
            "manifest declares {total} values but blob holds {}",
            blob.len() / 8
        )));
    }

    let mut by_name: HashMap<&str, &ParamEntry> = HashMap::new();
    for e in &manifest.params {
        if by_name.insert(e.name.as_str(), e).is_some() {
            return Err(ModelError::Checkpoint(format!(
                "duplicate parameter `{}` in manifest",
                e.name
            )));
        }
    }

    let mut model = build_unified_model(&manifest.config)?;
    let mut missing: Vec<String> = Vec::new();
    let mut used = 0usize;
    let mut fill_err: Option<String> = None;
    model.visit_params_mut(&mut |name, t| {
        let Some(entry) = by_name.get(name) else {
            missing.push(name.to_string());
            return;
        };
        if entry.shape != t.shape() {
            fill_err.get_or_insert(format!(
                "parameter `{name}`: manifest shape {:?} vs model shape {:?}",
                entry.shape,
                t.shape()
            ));
            return;
        }
        let start = entry.offset as usize * 8;
        let end = start + entry.len as usize * 8;
        if end > blob.len() {
            fill_err.get_or_insert(format!("parameter `{name}` extends past blob end"));
            return;
        }
        for (dst, chunk) in t.data_mut().iter_mut().zip(blob[start..end].chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        used += 1;
    });
    if let Some(e) = fill_err {
        return Err(ModelError::Checkpoint(e));
    }
    if !missing.is_empty() {
        return Err(ModelError::Checkpoint(format!(
            "manifest is missing parameters: {missing:?}"
        )));
    }
    if used != manifest.params.len() {
        return Err(ModelError::Checkpoint(format!(
            "manifest lists {} parameters but the model consumes {used}",
            manifest.params.len()
        )));
    }
    Ok(model)
}
