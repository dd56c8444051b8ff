//! Checkpoint file: `EMGT`, version u16, header length u32, a UTF-8 JSON
//! header, then little-endian f32 tensor payloads in directory order.
//! Offsets in the directory are relative to the first payload byte; the
//! header also carries a SHA-256 of the whole payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AdamState, EpochRecord, TrainError};
use crate::autodiff::{Parameter, Tensor};
use crate::model::{ModelConfig, ModelWeights};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EMGT";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Where the weights came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub dataset: String,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default)]
    pub history: Vec<EpochRecord>,
    /// Weights hash of the checkpoint this one was fine-tuned from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub weights: ModelWeights<f32>,
    pub optimizer: Option<AdamState<f32>>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer_step: Option<u64>,
    tensors: Vec<TensorEntry>,
    payload_sha256: String,
}

const ADAM_M: &str = "adam.m.";
const ADAM_V: &str = "adam.v.";

/// SHA-256 over every tensor's name, shape and little-endian f32 data.
pub fn weights_hash(weights: &ModelWeights<f32>) -> String {
    let mut h = Sha256::new();
    for p in &weights.params {
        h.update(p.name.as_bytes());
        h.update([0u8]);
        for &d in p.value.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for v in p.value.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let mut tensors: Vec<(&str, &Tensor<f32>)> = ckpt
        .weights
        .params
        .iter()
        .map(|p| (p.name.as_str(), &p.value))
        .collect();
    let names: Vec<String> = ckpt
        .optimizer
        .iter()
        .flat_map(|_| {
            ckpt.weights
                .params
                .iter()
                .flat_map(|p| [format!("{ADAM_M}{}", p.name), format!("{ADAM_V}{}", p.name)])
        })
        .collect();
    if let Some(opt) = &ckpt.optimizer {
        for (i, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
            tensors.push((&names[2 * i], m));
            tensors.push((&names[2 * i + 1], v));
        }
    }
    let mut offset = 0u64;
    let entries = tensors
        .iter()
        .map(|(name, t)| {
            let e = TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset,
            };
            offset += 4 * t.numel() as u64;
            e
        })
        .collect();
    let mut payload = Vec::with_capacity(offset as usize);
    for (_, t) in tensors {
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        config: ckpt.weights.config.clone(),
        provenance: ckpt.provenance.clone(),
        optimizer_step: ckpt.optimizer.as_ref().map(|o| o.step),
        tensors: entries,
        payload_sha256: hex::encode(Sha256::digest(&payload)),
    };
    let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
    let mut out = Vec::with_capacity(10 + json.len() + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    out
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), TrainError> {
    fs::write(path, encode(ckpt)).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn corrupt(offset: usize, reason: impl Into<String>) -> TrainError {
    TrainError::Checkpoint {
        offset: offset as u64,
        reason: reason.into(),
    }
}

fn decode(bytes: &[u8]) -> Result<Checkpoint, TrainError> {
    if bytes.len() < 4 {
        return Err(corrupt(bytes.len(), "truncated before magic"));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(corrupt(0, "bad magic, expected EMGT"));
    }
    if bytes.len() < 10 {
        return Err(corrupt(bytes.len(), "truncated header prefix"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(
            4,
            format!("unsupported version {version}; this build reads version {CHECKPOINT_VERSION}"),
        ));
    }
    let header_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let payload_start = 10 + header_len;
    if bytes.len() < payload_start {
        return Err(corrupt(bytes.len(), format!("truncated header, expected {header_len} bytes")));
    }
    let header: Header = serde_json::from_slice(&bytes[10..payload_start])
        .map_err(|e| corrupt(10 + e.column().saturating_sub(1), format!("malformed header: {e}")))?;
    let mut expected_offset = 0u64;
    let mut read = |entry: &TensorEntry| -> Result<Tensor<f32>, TrainError> {
        if entry.offset != expected_offset {
            return Err(corrupt(
                payload_start + expected_offset as usize,
                format!("tensor {} declared at offset {}, expected {expected_offset}", entry.name, entry.offset),
            ));
        }
        let n: usize = entry.shape.iter().product();
        let start = payload_start + entry.offset as usize;
        let end = start + 4 * n;
        if bytes.len() < end {
            return Err(corrupt(bytes.len(), format!("payload truncated inside tensor {}", entry.name)));
        }
        expected_offset += 4 * n as u64;
        let data = bytes[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Tensor::from_vec(&entry.shape, data).map_err(|e| corrupt(start, format!("tensor {}: {e}", entry.name)))
    };
    let mut params = Vec::new();
    let mut m = Vec::new();
    let mut v = Vec::new();
    for entry in &header.tensors {
        let t = read(entry)?;
        if entry.name.starts_with(ADAM_M) {
            m.push(t);
        } else if entry.name.starts_with(ADAM_V) {
            v.push(t);
        } else {
            params.push(Parameter::new(entry.name.clone(), t));
        }
    }
    let end = payload_start + expected_offset as usize;
    if bytes.len() != end {
        return Err(corrupt(end, format!("{} trailing bytes", bytes.len() - end)));
    }
    if hex::encode(Sha256::digest(&bytes[payload_start..end])) != header.payload_sha256 {
        return Err(corrupt(payload_start, "payload checksum mismatch"));
    }
    let weights = ModelWeights::from_params(header.config, params)
        .map_err(|e| corrupt(10, e.to_string()))?;
    let optimizer = match header.optimizer_step {
        Some(step) if m.len() == weights.params.len() && v.len() == m.len() => {
            Some(AdamState { m, v, step })
        }
        Some(_) => return Err(corrupt(10, "optimizer moments do not match parameters")),
        None => None,
    };
    Ok(Checkpoint {
        weights,
        optimizer,
        provenance: header.provenance,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let bytes = fs::read(path).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}
