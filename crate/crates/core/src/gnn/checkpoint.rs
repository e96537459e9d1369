//! Checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "TQACKPT\0"
//! version    u32       1
//! header_len u64       length of the JSON header in bytes
//! header     JSON      {config, max_tokens, vocab, metadata, tensors: [{name, shape}]}
//! payload    f64 LE    every tensor in header order, row-major
//! ```
//!
//! Tensor names are `embedding`, `layer{l}.{field}`, `layer{l}.bn_running_mean`,
//! `layer{l}.bn_running_var`, `row_head.{w,b}` and `col_head.{w,b}`.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{GatBuffers, GatParams};
use super::train::SelectorModel;
use super::GatConfig;
use crate::featurizer::{FeaturizerParams, Vocab, UNK_TOKEN};

pub const MAGIC: &[u8; 8] = b"TQACKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("bad checkpoint header: {0}")]
    Header(String),
    #[error("tensor {name} has shape {got:?}, expected {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub epoch: usize,
    pub dev_f1: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SelectorModel,
    pub metadata: TrainingMetadata,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: GatConfig,
    max_tokens: usize,
    vocab: Vec<String>,
    metadata: TrainingMetadata,
    tensors: Vec<TensorEntry>,
}

fn buffer_tensors(buffers: &GatBuffers) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    for (l, (m, v)) in buffers.running_mean.iter().zip(&buffers.running_var).enumerate() {
        out.push((format!("layer{l}.bn_running_mean"), m.to_vec()));
        out.push((format!("layer{l}.bn_running_var"), v.to_vec()));
    }
    out
}

pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, mut w: W) -> Result<(), CheckpointError> {
    let model = &ckpt.model;
    let params = model.params.named_tensors();
    let buffers = buffer_tensors(&model.buffers);
    let mut tensors: Vec<TensorEntry> = params
        .iter()
        .map(|(name, t)| TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
        })
        .collect();
    tensors.extend(buffers.iter().map(|(name, v)| TensorEntry {
        name: name.clone(),
        shape: vec![1, v.len()],
    }));
    let header = Header {
        config: model.config.clone(),
        max_tokens: model.max_tokens,
        vocab: model.vocab.tokens()[1..].to_vec(),
        metadata: ckpt.metadata.clone(),
        tensors,
    };
    let header = serde_json::to_vec(&header).map_err(|e| CheckpointError::Header(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    let mut bytes = Vec::new();
    let values = params
        .iter()
        .flat_map(|(_, t)| t.iter().copied())
        .chain(buffers.iter().flat_map(|(_, v)| v.iter().copied()));
    for x in values {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, CheckpointError> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header).map_err(|e| CheckpointError::Header(e.to_string()))?;
    header
        .config
        .validate()
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    if header.vocab.first().map(String::as_str) == Some(UNK_TOKEN) {
        return Err(CheckpointError::Header("vocab must not list the unknown token".into()));
    }

    let vocab = Vocab::from_tokens(header.vocab);
    let config = header.config;
    let mut params = GatParams {
        featurizer: FeaturizerParams {
            embedding: Array2::zeros((vocab.len(), config.node_dim)),
        },
        ..GatParams::init(&config, 0, &mut ChaCha8Rng::seed_from_u64(0))
    };
    let mut buffers = GatBuffers::new(&config);

    let expected: Vec<(String, Vec<usize>)> = params
        .named_tensors()
        .iter()
        .map(|(n, t)| (n.clone(), t.shape().to_vec()))
        .chain(
            buffer_tensors(&buffers)
                .into_iter()
                .map(|(n, v)| (n, vec![1, v.len()])),
        )
        .collect();
    if expected.len() != header.tensors.len() {
        return Err(CheckpointError::Header(format!(
            "expected {} tensors, found {}",
            expected.len(),
            header.tensors.len()
        )));
    }
    for ((name, shape), entry) in expected.iter().zip(&header.tensors) {
        if *name != entry.name || *shape != entry.shape {
            return Err(CheckpointError::Shape {
                name: entry.name.clone(),
                expected: shape.clone(),
                got: entry.shape.clone(),
            });
        }
    }

    for t in params.tensors_mut() {
        let data = read_f64s(&mut r, t.len())?;
        t.as_slice_mut().expect("contiguous").copy_from_slice(&data);
    }
    for l in 0..config.layers {
        buffers.running_mean[l] = Array1::from(read_f64s(&mut r, config.node_dim)?);
        buffers.running_var[l] = Array1::from(read_f64s(&mut r, config.node_dim)?);
    }
    Ok(Checkpoint {
        model: SelectorModel {
            config,
            max_tokens: header.max_tokens,
            vocab,
            params,
            buffers,
        },
        metadata: header.metadata,
    })
}
