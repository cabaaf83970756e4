//! Checkpoint files.
//!
//! | bytes | field                                          |
//! |-------|------------------------------------------------|
//! | 8     | magic `TIEDGOCK`                               |
//! | 4     | format version, u32 LE                         |
//! | 4     | header length `h`, u32 LE                      |
//! | h     | TOML header ([`CheckpointHeader`])             |
//! | 4·n   | free parameters as f32 LE, tensors in order    |
//! | 32    | SHA-256 of everything above                    |
//!
//! No wall-clock fields are stored, so identical runs give identical files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::Hyperparameters;
use crate::symnet::{Network, NetworkSpec};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TIEDGOCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("bad checkpoint header: {0}")]
    Header(String),
    #[error("tensor {name}: header says {expected} values, network needs {actual}")]
    TensorShape { name: String, expected: usize, actual: usize },
}

/// Position in the schedule: `epoch` epochs finished, then `batch` batches
/// of the next one. The shuffle of each epoch is derived from the seed and
/// the epoch number, so this is the whole RNG state.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Progress {
    pub epoch: usize,
    pub batch: usize,
    pub steps: u64,
    /// Sum of batch losses so far in the current epoch.
    pub epoch_loss_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub train_nll: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_nll: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub network: NetworkSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<Hyperparameters>,
    #[serde(default)]
    pub progress: Progress,
    #[serde(default)]
    pub history: Vec<EpochStats>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub network: Network<f32>,
}

impl Checkpoint {
    /// A checkpoint of a bare network, with no training state.
    pub fn from_network(network: Network<f32>) -> Checkpoint {
        let header = CheckpointHeader {
            network: network.spec().clone(),
            training: None,
            progress: Progress::default(),
            history: Vec::new(),
            tensors: Vec::new(),
        };
        Checkpoint { header, network }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = self.header.clone();
        header.network = self.network.spec().clone();
        header.tensors = self
            .network
            .tensor_names()
            .into_iter()
            .zip(self.network.tensors())
            .map(|(name, t)| TensorEntry { name, len: t.len() })
            .collect();
        let text = toml::to_string(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        for t in self.network.tensors() {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
        if bytes.len() < 16 + 32 {
            return Err(if bytes.starts_with(CHECKPOINT_MAGIC) { CheckpointError::Truncated } else { CheckpointError::BadMagic });
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(CheckpointError::Checksum);
        }
        let version = u32::from_le_bytes(body[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::BadVersion(version));
        }
        let hlen = u32::from_le_bytes(body[12..16].try_into().unwrap()) as usize;
        let text = body.get(16..16 + hlen).ok_or(CheckpointError::Truncated)?;
        let text = std::str::from_utf8(text).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let header: CheckpointHeader = toml::from_str(text).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let mut network = Network::<f32>::new(header.network.clone()).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let names = network.tensor_names();
        if names.len() != header.tensors.len() {
            return Err(CheckpointError::Header(format!(
                "{} tensors listed, network has {}",
                header.tensors.len(),
                names.len()
            )));
        }
        let mut data = &body[16 + hlen..];
        for (i, entry) in header.tensors.iter().enumerate() {
            let actual = network.tensors()[i].len();
            if entry.name != names[i] || entry.len != actual {
                return Err(CheckpointError::TensorShape { name: entry.name.clone(), expected: entry.len, actual });
            }
            if data.len() < 4 * actual {
                return Err(CheckpointError::Truncated);
            }
            let (chunk, rest) = data.split_at(4 * actual);
            let values = chunk.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
            network.set_tensor(i, values).expect("length checked");
            data = rest;
        }
        if !data.is_empty() {
            return Err(CheckpointError::Header(format!("{} trailing bytes", data.len())));
        }
        Ok(Checkpoint { header, network })
    }

    /// Writes via a temporary file and rename, so an existing checkpoint is
    /// never left half-written.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io { path: path.display().to_string(), source };
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, self.to_bytes()).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Checkpoint::from_bytes(&bytes)
    }
}
