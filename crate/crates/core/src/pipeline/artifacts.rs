//! Binary model artifacts.
//!
//! Layout: the 8-byte magic `MKNNMODL`, a little-endian `u32` format
//! version, the 32-byte SHA-256 of the payload, then the bincode payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ModelKind;
use super::data::ExperimentData;
use super::models::{FittedModel, TrainedModel};
use crate::error::{Error, Result};
use crate::fingerprint;

pub const MAGIC: &[u8; 8] = b"MKNNMODL";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 32;

/// A fitted model plus what is needed to explain its predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub kind: ModelKind,
    pub model: TrainedModel,
    /// Chosen hyperparameters as a JSON object.
    pub hyperparameters: String,
    pub train_cpu_s: f64,
    /// SHA-256 over the training descriptors and labels.
    pub training_fingerprint: String,
    pub train_ids: Vec<String>,
    pub train_compositions: Vec<Option<String>>,
    /// Descriptor dimension the model expects.
    pub n_features: usize,
}

impl ModelArtifact {
    pub fn new(fitted: FittedModel, data: &ExperimentData, train: &[usize]) -> Self {
        let x = data.global.select_rows(train);
        let y = data.labels_at(train);
        let tags = data.composition_tags();
        ModelArtifact {
            kind: fitted.kind,
            hyperparameters: fitted.hyperparameters.to_string(),
            train_cpu_s: fitted.train_cpu_s,
            training_fingerprint: fingerprint::of_floats([x.as_slice(), y.as_slice()]),
            train_ids: train.iter().map(|&i| data.ids[i].clone()).collect(),
            train_compositions: train.iter().map(|&i| tags[i].clone()).collect(),
            n_features: data.global.cols(),
            model: fitted.model,
        }
    }

    pub fn fitted(&self) -> Result<FittedModel> {
        Ok(FittedModel {
            kind: self.kind,
            model: self.model.clone(),
            hyperparameters: serde_json::from_str(&self.hyperparameters)
                .map_err(|e| Error::Serialization(e.to_string()))?,
            train_cpu_s: self.train_cpu_s,
        })
    }
}

pub fn save_model(path: &Path, artifact: &ModelArtifact) -> Result<()> {
    let payload = bincode::serialize(artifact).map_err(|e| Error::Serialization(e.to_string()))?;
    let mut bytes = Vec::with_capacity(HEADER_LEN + payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&Sha256::digest(&payload));
    bytes.extend_from_slice(&payload);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads an artifact, rejecting wrong magic, unknown versions and payloads
/// whose checksum does not match.
pub fn load_model(path: &Path) -> Result<ModelArtifact> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Serialization(format!("{}: {m}", path.display()));
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(bad("not a model artifact"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported artifact version {version}")));
    }
    let payload = &bytes[HEADER_LEN..];
    if Sha256::digest(payload).as_slice() != &bytes[12..HEADER_LEN] {
        return Err(bad("checksum mismatch"));
    }
    bincode::deserialize(payload).map_err(|e| bad(&e.to_string()))
}
