//! Exact cosine-similarity index over chunk embeddings.
//!
//! A flat scan: every query is scored against every candidate, so results are
//! the true top-k. Ties are broken by chunk id.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chunker::MeasureUnit;
use crate::embed::{l2_norm, EmbeddingVector};

/// Default number of chunks retrieved per query.
pub const DEFAULT_TOP_K: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub chunk_id: String,
    pub record_id: String,
    pub vector: EmbeddingVector,
    /// Lowercase hex SHA-256 of the chunk text.
    pub text_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub chunk_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpsertReport {
    pub inserted: usize,
    pub updated: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexError {
    #[error("vector for {chunk_id:?} has dimension {found}, index dimension is {expected}")]
    DimensionMismatch {
        chunk_id: String,
        expected: usize,
        found: usize,
    },
    #[error("query has dimension {found}, index dimension is {expected}")]
    QueryDimension { expected: usize, found: usize },
    #[error("vector for {0:?} has zero norm")]
    ZeroNorm(String),
    #[error("query vector has zero norm")]
    ZeroQuery,
    #[error("k must be positive")]
    ZeroK,
    #[error("index is empty")]
    Empty,
    #[error("index dimension must be positive")]
    ZeroDim,
}

/// Lowercase hex SHA-256 of `text`.
pub fn text_digest(text: &str) -> String {
    hex_lower(&Sha256::digest(text.as_bytes()))
}

pub(crate) fn hex_lower(bytes: &[u8]) -> String {
    const HEX: &[u8; 16] = b"0123456789abcdef";
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push(HEX[(b >> 4) as usize] as char);
        s.push(HEX[(b & 0xf) as usize] as char);
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    unit: MeasureUnit,
    entries: Vec<IndexEntry>,
    norms: Vec<f64>,
    positions: BTreeMap<String, usize>,
}

impl VectorIndex {
    pub fn new(dim: usize, unit: MeasureUnit) -> Result<Self, IndexError> {
        if dim == 0 {
            return Err(IndexError::ZeroDim);
        }
        Ok(VectorIndex {
            dim,
            unit,
            entries: Vec::new(),
            norms: Vec::new(),
            positions: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Measure unit the indexed chunks were cut with.
    pub fn unit(&self) -> MeasureUnit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn get(&self, chunk_id: &str) -> Option<&IndexEntry> {
        self.positions.get(chunk_id).map(|&i| &self.entries[i])
    }

    /// Inserts new chunk ids and replaces existing ones. The whole batch is
    /// validated first; on error the index is unchanged.
    pub fn upsert(&mut self, batch: Vec<IndexEntry>) -> Result<UpsertReport, IndexError> {
        let mut norms = Vec::with_capacity(batch.len());
        for e in &batch {
            if e.vector.dim() != self.dim {
                return Err(IndexError::DimensionMismatch {
                    chunk_id: e.chunk_id.clone(),
                    expected: self.dim,
                    found: e.vector.dim(),
                });
            }
            let n = e.vector.norm();
            if n == 0.0 || !n.is_finite() {
                return Err(IndexError::ZeroNorm(e.chunk_id.clone()));
            }
            norms.push(n);
        }

        let mut report = UpsertReport::default();
        for (e, n) in batch.into_iter().zip(norms) {
            match self.positions.get(&e.chunk_id) {
                Some(&i) => {
                    self.entries[i] = e;
                    self.norms[i] = n;
                    report.updated += 1;
                }
                None => {
                    self.positions.insert(e.chunk_id.clone(), self.entries.len());
                    self.entries.push(e);
                    self.norms.push(n);
                    report.inserted += 1;
                }
            }
        }
        Ok(report)
    }

    /// Exact top-`k` by cosine similarity, optionally restricted to the chunks
    /// of one record. Hits are ordered by score descending, then chunk id
    /// ascending.
    pub fn search(
        &self,
        query: &EmbeddingVector,
        k: usize,
        record_filter: Option<&str>,
    ) -> Result<Vec<SearchHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if self.entries.is_empty() {
            return Err(IndexError::Empty);
        }
        if query.dim() != self.dim {
            return Err(IndexError::QueryDimension {
                expected: self.dim,
                found: query.dim(),
            });
        }
        let qn = l2_norm(query);
        if qn == 0.0 {
            return Err(IndexError::ZeroQuery);
        }

        let mut scored: Vec<(f64, &str)> = self
            .entries
            .iter()
            .zip(&self.norms)
            .filter(|(e, _)| record_filter.is_none_or(|r| e.record_id == r))
            .map(|(e, &n)| {
                let dot: f64 = e.vector.iter().zip(query.iter()).map(|(a, b)| a * b).sum();
                ((dot / (n * qn)).clamp(-1.0, 1.0), e.chunk_id.as_str())
            })
            .collect();

        let order = |a: &(f64, &str), b: &(f64, &str)| {
            b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then_with(|| a.1.cmp(b.1))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);

        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(i, (score, id))| SearchHit {
                chunk_id: String::from(id),
                score,
                rank: i + 1,
            })
            .collect())
    }
}
