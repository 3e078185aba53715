//! Versioned binary checkpoints.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header, the parameters as little-endian `f32`, and a SHA-256 digest of
//! everything before it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::{Model, ModelConfig, Normalizer};

use super::history::TrainHistory;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"ESRCKPT\0";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    normalizer: Option<Normalizer>,
    param_count: usize,
    history: TrainHistory,
    state: TrainingState,
}

/// Where training stood when the checkpoint was written.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub epochs_done: usize,
    pub lr: f64,
    pub adam_steps: u64,
    pub label: String,
}

pub struct Checkpoint {
    pub model: Model,
    pub history: TrainHistory,
    pub state: TrainingState,
}

pub fn save_checkpoint(path: &Path, model: &Model, history: &TrainHistory, state: &TrainingState) -> Result<()> {
    let header = Header {
        config: *model.config(),
        normalizer: model.normalizer().cloned(),
        param_count: model.param_count(),
        history: history.clone(),
        state: state.clone(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::json(path, e))?;
    let mut buf = Vec::with_capacity(64 + header.len() + 4 * model.param_count());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for p in model.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    // write-then-rename so a crash never leaves a half-written checkpoint
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |reason: &str| Error::Corrupt { path: path.to_path_buf(), reason: reason.to_string() };
    if bytes.len() < 20 + 32 || &bytes[..8] != MAGIC {
        return Err(corrupt("not a checkpoint (bad magic or too short)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version { path: path.to_path_buf(), found: version, expected: CHECKPOINT_VERSION });
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch (truncated or modified)"));
    }
    let header_len = u64::from_le_bytes(body[12..20].try_into().unwrap()) as usize;
    let header_end = 20usize.checked_add(header_len).filter(|e| *e <= body.len()).ok_or_else(|| corrupt("header length out of range"))?;
    let header: Header = serde_json::from_slice(&body[20..header_end]).map_err(|e| Error::json(path, e))?;
    let raw = &body[header_end..];
    if raw.len() != 4 * header.param_count {
        return Err(corrupt("parameter block size does not match header"));
    }
    let params = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let model = Model::from_parts(header.config, params, header.normalizer)?;
    Ok(Checkpoint { model, history: header.history, state: header.state })
}
