//! Checkpoint files: an 8-byte little-endian header length, a UTF-8 JSON
//! manifest, then little-endian f32 tensor payloads in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ParamSet, Tensor};
use crate::sha256_hex;

use super::{EncoderConfig, EncoderParams, Network, PredictorParams, Role};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub role: Role,
    /// Training stage that produced the weights (0 = freshly initialized).
    pub stage: u8,
    pub step: u64,
    pub config_hash: String,
    pub encoder: EncoderConfig,
    pub normalization: String,
    pub activation: String,
    pub predictor_hidden: Option<usize>,
    pub tool_version: String,
}

impl CheckpointMeta {
    pub fn new(encoder: &EncoderConfig, role: Role, stage: u8, step: u64, config_hash: &str) -> Self {
        Self {
            role,
            stage,
            step,
            config_hash: config_hash.to_string(),
            encoder: encoder.clone(),
            normalization: format!("group_norm(max_groups={})", encoder.norm_groups),
            activation: "relu".into(),
            predictor_hidden: None,
            tool_version: crate::VERSION.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub encoder: EncoderParams,
    pub predictor: Option<PredictorParams>,
}

impl Checkpoint {
    pub fn new(encoder: EncoderParams, predictor: Option<PredictorParams>, mut meta: CheckpointMeta) -> Self {
        meta.role = encoder.role;
        meta.encoder = encoder.config.clone();
        meta.predictor_hidden = predictor.as_ref().map(|p| p.hidden);
        Self {
            meta,
            encoder,
            predictor,
        }
    }

    /// Reuses the weights under a new role (teacher → student/target).
    pub fn with_role(mut self, role: Role) -> Self {
        self.meta.role = role;
        self.encoder.role = role;
        self
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    length: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    dtype: String,
    tensors: Vec<TensorEntry>,
    metadata: CheckpointMeta,
    checksum: String,
}

const ENCODER_PREFIX: &str = "encoder.";
const PREDICTOR_PREFIX: &str = "predictor.";

pub fn checkpoint_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut payload = Vec::new();
    let groups = std::iter::once((ENCODER_PREFIX, &ckpt.encoder.tensors))
        .chain(ckpt.predictor.as_ref().map(|p| (PREDICTOR_PREFIX, &p.tensors)));
    for (prefix, set) in groups {
        for (name, t) in set.iter() {
            let offset = payload.len();
            for v in &t.data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            entries.push(TensorEntry {
                name: format!("{prefix}{name}"),
                shape: t.shape.clone(),
                offset,
                length: payload.len() - offset,
            });
        }
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        dtype: "f32".into(),
        tensors: entries,
        metadata: ckpt.meta.clone(),
        checksum: sha256_hex(&payload),
    };
    let header = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(8 + header.len() + payload.len());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = checkpoint_bytes(ckpt)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 8 {
        return Err(bad("file too short for header length"));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let header = bytes
        .get(8..8 + header_len)
        .ok_or_else(|| bad("truncated header"))?;
    let manifest: Manifest = serde_json::from_slice(header)
        .map_err(|e| Error::Checkpoint(format!("bad manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {} is not supported (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    if manifest.dtype != "f32" {
        return Err(Error::Checkpoint(format!("unsupported dtype {}", manifest.dtype)));
    }
    let payload = &bytes[8 + header_len..];
    let found = sha256_hex(payload);
    if found != manifest.checksum {
        return Err(Error::Checksum {
            expected: manifest.checksum,
            found,
        });
    }

    let mut encoder = ParamSet::new();
    let mut predictor = ParamSet::new();
    for e in &manifest.tensors {
        let raw = payload
            .get(e.offset..e.offset + e.length)
            .ok_or_else(|| bad("tensor extends past payload"))?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let tensor = Tensor::from_vec(&e.shape, data)?;
        if let Some(n) = e.name.strip_prefix(ENCODER_PREFIX) {
            encoder.push(n, tensor);
        } else if let Some(n) = e.name.strip_prefix(PREDICTOR_PREFIX) {
            predictor.push(n, tensor);
        } else {
            return Err(Error::Checkpoint(format!("unexpected tensor {}", e.name)));
        }
    }

    let meta = manifest.metadata;
    let net = Network::new(&meta.encoder)?;
    let expected = net.init_params(0);
    expected.check_compatible(&encoder)?;
    let predictor = match meta.predictor_hidden {
        Some(hidden) => {
            let template = PredictorParams::init(meta.encoder.embedding_dim, hidden, 0)?;
            template.tensors.check_compatible(&predictor)?;
            Some(PredictorParams {
                dim: meta.encoder.embedding_dim,
                hidden,
                tensors: predictor,
            })
        }
        None if predictor.is_empty() => None,
        None => return Err(bad("predictor tensors present without predictor metadata")),
    };
    Ok(Checkpoint {
        encoder: EncoderParams {
            config: meta.encoder.clone(),
            role: meta.role,
            tensors: encoder,
        },
        predictor,
        meta,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}
