//! Versioned binary checkpoint container.
//!
//! Layout (little endian):
//!
//! ```text
//! b"CLWBCKPT"  u32 version  u64 header_len  header_json  f64 values...
//! ```
//!
//! The JSON header holds the model config, vocabulary, label catalog,
//! free-form metadata, and the name and shape of each tensor; tensor data
//! follows in header order, row-major. Loading then saving reproduces the
//! file byte for byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Model, ModelConfig};
use super::vocab::Vocabulary;
use super::EncoderError;

const MAGIC: &[u8; 8] = b"CLWBCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocabulary,
    labels: Vec<String>,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

pub fn checkpoint_bytes(model: &Model, meta: &serde_json::Value) -> Result<Vec<u8>, EncoderError> {
    let params = model.named_parameters();
    let header = Header {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        labels: model.labels.clone(),
        meta: meta.clone(),
        tensors: params
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                rows: t.rows(),
                cols: t.cols(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| EncoderError::Checkpoint(e.to_string()))?;
    let data_len: usize = params.iter().map(|(_, t)| t.len() * 8).sum();
    let mut out = Vec::with_capacity(20 + header.len() + data_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in &params {
        for v in t.values().iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<(Model, serde_json::Value), EncoderError> {
    let bad = |msg: &str| EncoderError::Checkpoint(msg.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(EncoderError::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[20..header_end])
        .map_err(|e| EncoderError::Checkpoint(e.to_string()))?;

    let model = Model::new(header.config, header.vocab, header.labels, 0)?;
    let params = model.named_parameters();
    if params.len() != header.tensors.len() {
        return Err(EncoderError::Checkpoint(format!(
            "header lists {} tensors, config implies {}",
            header.tensors.len(),
            params.len()
        )));
    }
    let mut cursor = header_end;
    for ((name, t), entry) in params.iter().zip(&header.tensors) {
        if *name != entry.name || t.rows() != entry.rows || t.cols() != entry.cols {
            return Err(EncoderError::Checkpoint(format!(
                "tensor {} ({}x{}) does not match expected {name} ({})",
                entry.name,
                entry.rows,
                entry.cols,
                t.shape()
            )));
        }
        let end = cursor + t.len() * 8;
        if end > bytes.len() {
            return Err(bad("truncated tensor data"));
        }
        let values: Vec<f64> = bytes[cursor..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        t.set_values(&values)?;
        cursor = end;
    }
    if cursor != bytes.len() {
        return Err(bad("trailing bytes after tensor data"));
    }
    Ok((model, header.meta))
}

pub fn save_checkpoint(
    model: &Model,
    meta: &serde_json::Value,
    path: impl AsRef<Path>,
) -> Result<(), EncoderError> {
    fs::write(path, checkpoint_bytes(model, meta)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model, serde_json::Value), EncoderError> {
    model_from_bytes(&fs::read(path)?)
}
