//! Embedding vectors and the embedder interface.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Deref;

use serde::{Deserialize, Serialize};

/// A dense embedding. Components are always finite once validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::EmptyVector);
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite { index: 0, component: pos });
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        EmbeddingVector(self.0.iter().map(|v| v * factor).collect())
    }
}

impl Deref for EmbeddingVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("nothing to embed")]
    EmptyBatch,
    #[error("text {index} has nothing to embed")]
    EmptyText { index: usize },
    #[error("embedding is empty")]
    EmptyVector,
    #[error("embedding {index} has a non-finite component at {component}")]
    NonFinite { index: usize, component: usize },
    #[error("embedding {index} has dimension {found}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, found: usize },
    #[error("endpoint returned {found} embeddings for {expected} inputs")]
    CountMismatch { expected: usize, found: usize },
    #[error("embedding endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("embedding endpoint error {status}: {message}")]
    Endpoint { status: u16, message: String },
    #[error("malformed embedding response: {0}")]
    Malformed(String),
}

/// Maps texts to vectors, one per text, in order.
pub trait Embedder: Send + Sync {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut out = self.embed_batch(&[text])?;
        out.pop().ok_or(EmbedError::CountMismatch { expected: 1, found: 0 })
    }
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

/// Validates a raw endpoint response: right count, uniform dimension, finite
/// components.
pub fn check_batch(raw: Vec<Vec<f64>>, expected: usize) -> Result<Vec<EmbeddingVector>, EmbedError> {
    if raw.len() != expected {
        return Err(EmbedError::CountMismatch {
            expected,
            found: raw.len(),
        });
    }
    let dim = raw.first().map(Vec::len).unwrap_or(0);
    raw.into_iter()
        .enumerate()
        .map(|(index, v)| {
            if v.len() != dim {
                return Err(EmbedError::DimensionMismatch {
                    index,
                    expected: dim,
                    found: v.len(),
                });
            }
            EmbeddingVector::new(v).map_err(|e| match e {
                EmbedError::NonFinite { component, .. } => EmbedError::NonFinite { index, component },
                other => other,
            })
        })
        .collect()
}

/// Offline test double: seeded feature hashing of lowercased word unigrams
/// and bigrams into a fixed number of signed buckets.
///
/// Identical texts always get identical vectors; texts sharing words get
/// positively correlated vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { dim, seed }
    }

    fn bucket(&self, parts: &[&str], weight: f64, out: &mut [f64]) {
        let mut h = fnv1a(self.seed.to_le_bytes().iter().copied(), FNV_OFFSET);
        for (i, p) in parts.iter().enumerate() {
            if i > 0 {
                h = fnv1a([0x1f].into_iter(), h);
            }
            h = fnv1a(p.bytes(), h);
        }
        let h = splitmix64(h);
        let idx = (h % self.dim as u64) as usize;
        let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
        out[idx] += sign * weight;
    }

    pub fn embed_text(&self, text: &str) -> Option<EmbeddingVector> {
        let words: Vec<String> = text
            .split_whitespace()
            .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return None;
        }
        let mut v = alloc::vec![0.0; self.dim];
        for w in &words {
            self.bucket(&[w], 1.0, &mut v);
        }
        for pair in words.windows(2) {
            self.bucket(&[&pair[0], &pair[1]], 0.5, &mut v);
        }
        if v.iter().all(|x| *x == 0.0) {
            // Every contribution cancelled; fall back to a fixed direction.
            v[0] = 1.0;
        }
        Some(EmbeddingVector(v))
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(Self::DEFAULT_DIM, 0)
    }
}

impl Embedder for HashEmbedder {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyBatch);
        }
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| self.embed_text(t).ok_or(EmbedError::EmptyText { index }))
            .collect()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: impl Iterator<Item = u8>, mut h: u64) -> u64 {
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
