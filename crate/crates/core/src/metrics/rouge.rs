//! ROUGE-N and ROUGE-L.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::bleu::ngram_counts;
use super::{tokenize, MetricError};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_counts(overlap: usize, hyp_total: usize, ref_total: usize) -> Self {
        let precision = if hyp_total == 0 { 0.0 } else { overlap as f64 / hyp_total as f64 };
        let recall = if ref_total == 0 { 0.0 } else { overlap as f64 / ref_total as f64 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore { precision, recall, f1 }
    }
}

fn tokens_pair(hypothesis: &str, reference: &str) -> Result<(Vec<String>, Vec<String>), MetricError> {
    let h = tokenize(hypothesis);
    if h.is_empty() {
        return Err(MetricError::EmptyHypothesis { index: 0 });
    }
    let r = tokenize(reference);
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    Ok((h, r))
}

/// ROUGE-N: clipped n-gram overlap over hypothesis (precision) and reference
/// (recall) n-gram counts.
pub fn rouge_n(hypothesis: &str, reference: &str, n: usize) -> Result<RougeScore, MetricError> {
    if n == 0 {
        return Err(MetricError::InvalidOrder);
    }
    let (h, r) = tokens_pair(hypothesis, reference)?;
    let h: Vec<&str> = h.iter().map(String::as_str).collect();
    let r: Vec<&str> = r.iter().map(String::as_str).collect();
    let hc = ngram_counts(&h, n);
    let rc = ngram_counts(&r, n);
    let overlap: u64 = hc
        .iter()
        .map(|(g, c)| (*c).min(rc.get(g).copied().unwrap_or(0)))
        .sum();
    Ok(RougeScore::from_counts(
        overlap as usize,
        h.len().saturating_sub(n - 1),
        r.len().saturating_sub(n - 1),
    ))
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = alloc::vec![0usize; b.len() + 1];
    let mut cur = alloc::vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L: longest common subsequence over hypothesis and reference lengths.
pub fn rouge_l(hypothesis: &str, reference: &str) -> Result<RougeScore, MetricError> {
    let (h, r) = tokens_pair(hypothesis, reference)?;
    Ok(RougeScore::from_counts(lcs_len(&h, &r), h.len(), r.len()))
}
