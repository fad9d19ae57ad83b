//! On-disk dataset format: `manifest.json` plus two little-endian blobs,
//! `features.bin` (f32 actor features, scene vector appended per episode
//! when present) and `labels.bin` (u32 group label then N u32 action labels
//! per episode). Train episodes precede test episodes; the manifest pins
//! both counts and the exact byte length of each blob.

use super::{Dataset, Episode, GenSpec};
use crate::error::DataError;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const DATASET_VERSION: u32 = 1;
pub const GENERATOR_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.bin";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    generator_version: u32,
    seed: u64,
    episodes: usize,
    train_count: usize,
    t: usize,
    n: usize,
    d: usize,
    c_group: usize,
    c_action: usize,
    sigma: f64,
    amplitude: f64,
    scene_dim: Option<usize>,
    group_classes: Vec<String>,
    action_classes: Vec<String>,
    feature_bytes: u64,
    label_bytes: u64,
}

fn feature_stride(m: &Manifest) -> usize {
    m.t * m.n * m.d + m.scene_dim.unwrap_or(0)
}

fn label_stride(m: &Manifest) -> usize {
    1 + m.n
}

pub fn save(dataset: &Dataset, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir)?;
    let spec = &dataset.spec;
    let manifest = Manifest {
        format_version: DATASET_VERSION,
        generator_version: GENERATOR_VERSION,
        seed: spec.seed,
        episodes: dataset.episodes.len(),
        train_count: dataset.train_count,
        t: spec.t,
        n: spec.n,
        d: spec.d,
        c_group: spec.c_group,
        c_action: spec.c_action,
        sigma: spec.sigma,
        amplitude: spec.amplitude,
        scene_dim: spec.scene_dim,
        group_classes: dataset.group_classes.clone(),
        action_classes: dataset.action_classes.clone(),
        feature_bytes: (dataset.episodes.len() * 4 * (spec.t * spec.n * spec.d + spec.scene_dim.unwrap_or(0))) as u64,
        label_bytes: (dataset.episodes.len() * 4 * (1 + spec.n)) as u64,
    };

    let mut features = Vec::with_capacity(manifest.feature_bytes as usize);
    let mut labels = Vec::with_capacity(manifest.label_bytes as usize);
    for e in &dataset.episodes {
        for v in e.features.data() {
            features.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        if let Some(scene) = &e.scene {
            for v in scene {
                features.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        labels.extend_from_slice(&(e.group as u32).to_le_bytes());
        for &a in &e.actions {
            labels.extend_from_slice(&(a as u32).to_le_bytes());
        }
    }
    debug_assert_eq!(features.len() as u64, manifest.feature_bytes);
    debug_assert_eq!(labels.len() as u64, manifest.label_bytes);

    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest).map_err(|e| DataError::ManifestParse(e.to_string()))?,
    )?;
    fs::write(dir.join(FEATURES_FILE), features)?;
    fs::write(dir.join(LABELS_FILE), labels)?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<Dataset, DataError> {
    let manifest_text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let m: Manifest =
        serde_json::from_str(&manifest_text).map_err(|e| DataError::ManifestParse(e.to_string()))?;
    if m.format_version != DATASET_VERSION {
        return Err(DataError::VersionMismatch {
            found: m.format_version,
            expected: DATASET_VERSION,
        });
    }
    if m.train_count > m.episodes {
        return Err(DataError::ManifestParse(format!(
            "train count {} exceeds episode count {}",
            m.train_count, m.episodes
        )));
    }
    if m.group_classes.len() != m.c_group || m.action_classes.len() != m.c_action {
        return Err(DataError::ManifestParse(
            "class name lists do not match class counts".into(),
        ));
    }

    let features = fs::read(dir.join(FEATURES_FILE))?;
    let labels = fs::read(dir.join(LABELS_FILE))?;
    let expect_f = (m.episodes * 4 * feature_stride(&m)) as u64;
    let expect_l = (m.episodes * 4 * label_stride(&m)) as u64;
    if expect_f != m.feature_bytes || features.len() as u64 != expect_f {
        return Err(DataError::BlobMismatch(format!(
            "features.bin holds {} bytes, manifest declares {}, geometry needs {expect_f}",
            features.len(),
            m.feature_bytes
        )));
    }
    if expect_l != m.label_bytes || labels.len() as u64 != expect_l {
        return Err(DataError::BlobMismatch(format!(
            "labels.bin holds {} bytes, manifest declares {}, geometry needs {expect_l}",
            labels.len(),
            m.label_bytes
        )));
    }

    let fstride = feature_stride(&m) * 4;
    let lstride = label_stride(&m) * 4;
    let mut episodes = Vec::with_capacity(m.episodes);
    for i in 0..m.episodes {
        let fchunk = &features[i * fstride..(i + 1) * fstride];
        let lchunk = &labels[i * lstride..(i + 1) * lstride];

        let feat_count = m.t * m.n * m.d;
        let mut data = Vec::with_capacity(feat_count);
        for c in fchunk[..feat_count * 4].chunks_exact(4) {
            data.push(f32::from_le_bytes(c.try_into().unwrap()) as f64);
        }
        let scene = m.scene_dim.map(|ds| {
            fchunk[feat_count * 4..]
                .chunks_exact(4)
                .take(ds)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect::<Vec<f64>>()
        });

        let group = u32::from_le_bytes(lchunk[..4].try_into().unwrap()) as usize;
        if group >= m.c_group {
            return Err(DataError::BlobMismatch(format!(
                "episode {i}: group label {group} out of range"
            )));
        }
        let mut actions = Vec::with_capacity(m.n);
        for c in lchunk[4..].chunks_exact(4) {
            let a = u32::from_le_bytes(c.try_into().unwrap()) as usize;
            if a >= m.c_action {
                return Err(DataError::BlobMismatch(format!(
                    "episode {i}: action label {a} out of range"
                )));
            }
            actions.push(a);
        }

        episodes.push(Episode {
            features: Tensor::new(vec![m.t, m.n, m.d], data)
                .map_err(|e| DataError::BlobMismatch(e.to_string()))?,
            scene,
            group,
            actions,
        });
    }

    Ok(Dataset {
        spec: GenSpec {
            episodes: m.episodes,
            t: m.t,
            n: m.n,
            d: m.d,
            c_group: m.c_group,
            c_action: m.c_action,
            sigma: m.sigma,
            amplitude: m.amplitude,
            scene_dim: m.scene_dim,
            seed: m.seed,
        },
        group_classes: m.group_classes,
        action_classes: m.action_classes,
        episodes,
        train_count: m.train_count,
    })
}
