//! Text and embedding metrics.
//!
//! Text metrics tokenize by lowercasing and splitting on whitespace, the same
//! unit the chunker counts by default. Scores are on a 0..1 scale; reports
//! multiply by 100.

mod bleu;
mod rouge;
mod similarity;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu, corpus_bleu, BleuConfig, BleuStats, Smoothing};
pub use rouge::{rouge_l, rouge_n, RougeScore};
pub use similarity::{
    cosine_similarity, icd, icd_from_similarities, icd_gradient, IcdParams, SimilarityPair,
    DEFAULT_EPSILON,
};

use crate::embed::{EmbedError, Embedder};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("vectors have different dimensions ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroNorm,
    #[error("epsilon must be a positive finite number, got {0}")]
    InvalidEpsilon(f64),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("pair {index}: cos + epsilon = {value} is not positive")]
    NonPositiveDenominator { index: usize, value: f64 },
    #[error("hypothesis {index} has no tokens")]
    EmptyHypothesis { index: usize },
    #[error("hypothesis {index} has no references")]
    NoReferences { index: usize },
    #[error("reference has no tokens")]
    EmptyReference,
    #[error("n-gram order must be positive")]
    InvalidOrder,
    #[error(transparent)]
    Embedding(#[from] EmbedError),
}

/// Lowercased whitespace tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Similarity with the ground truth, in percent: `100 * cos`, floored at 0.
pub fn swgt<E: Embedder + ?Sized>(generated: &str, truth: &str, embedder: &E) -> Result<f64, MetricError> {
    if generated.trim().is_empty() {
        return Err(MetricError::EmptyHypothesis { index: 0 });
    }
    if truth.trim().is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let v = embedder.embed_batch(&[generated, truth])?;
    let cos = cosine_similarity(&v[0], &v[1])?;
    Ok((100.0 * cos).max(0.0))
}

/// All automatic metrics for one generated abstract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu: f64,
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
    pub cosine: f64,
    pub swgt_percent: f64,
}

impl MetricReport {
    pub fn compute<E: Embedder + ?Sized>(
        generated: &str,
        truth: &str,
        embedder: &E,
        bleu_cfg: &BleuConfig,
    ) -> Result<Self, MetricError> {
        let v = embedder.embed_batch(&[generated, truth])?;
        let cosine = cosine_similarity(&v[0], &v[1])?;
        Ok(MetricReport {
            bleu: bleu(generated, &[truth], bleu_cfg)?,
            rouge1: rouge_n(generated, truth, 1)?,
            rouge2: rouge_n(generated, truth, 2)?,
            rouge_l: rouge_l(generated, truth)?,
            cosine,
            swgt_percent: (100.0 * cosine).max(0.0),
        })
    }

    /// True when every field lies in its declared range.
    pub fn in_range(&self) -> bool {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let rouge_ok = |r: &RougeScore| unit(r.precision) && unit(r.recall) && unit(r.f1);
        unit(self.bleu)
            && rouge_ok(&self.rouge1)
            && rouge_ok(&self.rouge2)
            && rouge_ok(&self.rouge_l)
            && (-1.0..=1.0).contains(&self.cosine)
            && (0.0..=100.0).contains(&self.swgt_percent)
    }
}
