//! Glyph and writing-system similarity learning.
//!
//! Stage 1 trains a teacher encoder with a supervised contrastive loss on
//! labeled invented alphabets. Stage 2 initializes a student and an EMA
//! target from the teacher and adapts them to unlabeled historical scripts
//! with a BYOL-style prediction objective. Frozen embeddings are then
//! compared at glyph level (cosine) and script level (symmetrized
//! mean-of-nearest-neighbor distance) and evaluated with N-way 1-shot
//! retrieval, NDCG@k and Spearman correlation.

pub mod dataset;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod glyph;
pub mod losses;
pub mod nn;
pub mod parallel;
pub mod seed;
pub mod similarity;
pub mod training;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Lowercase hex SHA-256 digest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// SHA-256 of a value's JSON serialization.
pub fn config_hash<T: serde::Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("config serializes to JSON"))
}
