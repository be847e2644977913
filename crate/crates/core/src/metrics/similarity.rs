//! Cosine similarity and the inverse cosine distance (ICD) loss.
//!
//! For a batch of `N` (truth, generated) embedding pairs with similarities
//! `cos_i`, the loss is
//!
//! ```text
//! ICD = (1/N) * sum_i 1 / (cos_i + epsilon)
//! ```
//!
//! and its gradient with respect to each generated vector `g_i` (truth `t_i`) is
//!
//! ```text
//! dICD/dg_i = -(1/N) * (cos_i + epsilon)^-2 * ( t_i / (|t_i| |g_i|) - cos_i * g_i / |g_i|^2 )
//! ```

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::embed::{l2_norm, EmbeddingVector};

pub const DEFAULT_EPSILON: f64 = 1e-8;

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn checked_norms(u: &[f64], v: &[f64]) -> Result<(f64, f64), MetricError> {
    if u.len() != v.len() {
        return Err(MetricError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (nu, nv) = (l2_norm(u), l2_norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(MetricError::ZeroNorm);
    }
    Ok((nu, nv))
}

/// `dot(u, v) / (|u| |v|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, MetricError> {
    let (nu, nv) = checked_norms(u, v)?;
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcdParams {
    pub epsilon: f64,
    /// Clamp negative similarities to zero so the denominator stays positive.
    /// When off, a non-positive `cos + epsilon` is an error.
    pub safeguard: bool,
}

impl Default for IcdParams {
    fn default() -> Self {
        IcdParams {
            epsilon: DEFAULT_EPSILON,
            safeguard: true,
        }
    }
}

impl IcdParams {
    fn validate(&self) -> Result<(), MetricError> {
        if self.epsilon > 0.0 && self.epsilon.is_finite() {
            Ok(())
        } else {
            Err(MetricError::InvalidEpsilon(self.epsilon))
        }
    }

    /// Effective similarity used in the denominator, and whether it was clamped.
    fn effective(&self, index: usize, cos: f64) -> Result<(f64, bool), MetricError> {
        if self.safeguard && cos < 0.0 {
            return Ok((0.0, true));
        }
        if cos + self.epsilon <= 0.0 {
            return Err(MetricError::NonPositiveDenominator {
                index,
                value: cos + self.epsilon,
            });
        }
        Ok((cos, false))
    }
}

/// Embeddings of a reference abstract and a generated one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityPair {
    pub truth: EmbeddingVector,
    pub generated: EmbeddingVector,
}

impl SimilarityPair {
    pub fn new(truth: EmbeddingVector, generated: EmbeddingVector) -> Self {
        SimilarityPair { truth, generated }
    }

    pub fn cosine(&self) -> Result<f64, MetricError> {
        cosine_similarity(&self.truth, &self.generated)
    }
}

/// ICD from precomputed similarities.
pub fn icd_from_similarities(similarities: &[f64], params: &IcdParams) -> Result<f64, MetricError> {
    params.validate()?;
    if similarities.is_empty() {
        return Err(MetricError::EmptyBatch);
    }
    let mut sum = 0.0;
    for (i, &cos) in similarities.iter().enumerate() {
        let (c, _) = params.effective(i, cos)?;
        sum += 1.0 / (c + params.epsilon);
    }
    Ok(sum / similarities.len() as f64)
}

pub fn icd(pairs: &[SimilarityPair], params: &IcdParams) -> Result<f64, MetricError> {
    let sims = pairs.iter().map(SimilarityPair::cosine).collect::<Result<Vec<_>, _>>()?;
    icd_from_similarities(&sims, params)
}

/// Analytic gradient of [`icd`] with respect to each generated vector.
///
/// Pairs whose similarity was clamped by the safeguard get a zero gradient.
pub fn icd_gradient(pairs: &[SimilarityPair], params: &IcdParams) -> Result<Vec<Vec<f64>>, MetricError> {
    params.validate()?;
    if pairs.is_empty() {
        return Err(MetricError::EmptyBatch);
    }
    let n = pairs.len() as f64;
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (t, g) = (p.truth.values(), p.generated.values());
            let (nt, ng) = checked_norms(t, g)?;
            let cos = (dot(t, g) / (nt * ng)).clamp(-1.0, 1.0);
            let (c, clamped) = params.effective(i, cos)?;
            if clamped {
                return Ok(alloc::vec![0.0; g.len()]);
            }
            let outer = -1.0 / (n * (c + params.epsilon) * (c + params.epsilon));
            Ok(t.iter()
                .zip(g)
                .map(|(ti, gi)| outer * (ti / (nt * ng) - cos * gi / (ng * ng)))
                .collect())
        })
        .collect()
}
