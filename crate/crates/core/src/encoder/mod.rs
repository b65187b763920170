//! Encoder backbone, predictor head, parameter EMA and checkpoints.

mod checkpoint;
mod ema;
mod network;
mod predictor;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, Checkpoint,
    CheckpointMeta, FORMAT_VERSION,
};
pub use ema::{ema_update, ema_update_params};
pub use network::{Network, Tape};
pub use predictor::{PredictorCache, PredictorParams};
pub(crate) use predictor::{backward as predictor_backward, forward as predictor_forward};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glyph::Bitmap;
use crate::nn::ParamSet;

/// Backbone family. Only the simple CNN is built in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Architecture {
    SimpleCnn,
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple_cnn" => Ok(Architecture::SimpleCnn),
            other => Err(Error::UnknownArchitecture(other.to_string())),
        }
    }
}

impl TryFrom<String> for Architecture {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Architecture> for String {
    fn from(a: Architecture) -> String {
        a.to_string()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Architecture::SimpleCnn => f.write_str("simple_cnn"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub architecture: Architecture,
    pub embedding_dim: usize,
    pub seed: u64,
    /// Output channels of the four convolution blocks.
    pub widths: [usize; 4],
    pub convs_per_block: usize,
    /// Upper bound on group-norm groups per layer.
    pub norm_groups: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::SimpleCnn,
            embedding_dim: 128,
            seed: 0,
            widths: [64, 128, 256, 256],
            convs_per_block: 2,
            norm_groups: 8,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::InvalidArgument("embedding_dim must be > 0".into()));
        }
        if self.widths.contains(&0) || self.convs_per_block == 0 || self.norm_groups == 0 {
            return Err(Error::InvalidArgument(
                "widths, convs_per_block and norm_groups must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Which network a parameter set plays in the two-stage pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Teacher,
    Student,
    Target,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Teacher => "teacher",
            Role::Student => "student",
            Role::Target => "target",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub role: Role,
    pub tensors: ParamSet<f32>,
}

impl EncoderParams {
    pub fn num_parameters(&self) -> usize {
        self.tensors.num_elements()
    }

    pub fn network(&self) -> Network {
        Network::new(&self.config).expect("validated at construction")
    }
}

/// Seeded He initialization of the configured backbone.
pub fn init_encoder(cfg: &EncoderConfig) -> Result<EncoderParams> {
    cfg.validate()?;
    let net = Network::new(cfg)?;
    let tensors = net.init_params(cfg.seed);
    Ok(EncoderParams {
        config: cfg.clone(),
        role: Role::Teacher,
        tensors,
    })
}

/// Unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f32>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }
}

/// Embeddings for a batch plus the indices that hit the zero-norm fallback.
#[derive(Debug, Clone)]
pub struct EmbedOutput {
    pub embeddings: Vec<Embedding>,
    pub fallback: Vec<usize>,
}

/// Inference-mode forward pass followed by L2 normalization.
pub fn embed(params: &EncoderParams, images: &[&Bitmap]) -> EmbedOutput {
    let net = params.network();
    let outs = net.embed_batch::<f32>(&params.tensors, images);
    let mut fallback = Vec::new();
    let embeddings = outs
        .into_iter()
        .enumerate()
        .map(|(i, o)| {
            if o.fallback {
                log::warn!("zero-norm embedding for batch item {i}; using basis vector");
                fallback.push(i);
            }
            Embedding(o.z)
        })
        .collect();
    EmbedOutput {
        embeddings,
        fallback,
    }
}
