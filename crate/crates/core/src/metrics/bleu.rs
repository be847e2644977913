//! Corpus BLEU with clipped n-gram precision and brevity penalty.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{tokenize, MetricError};

/// How zero n-gram matches are treated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Smoothing {
    /// Any order with zero matches makes the score 0.
    #[default]
    None,
    /// Orders with zero matches use `epsilon / total` as their precision.
    Epsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_n: usize,
    pub smoothing: Smoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_n: 4,
            smoothing: Smoothing::None,
        }
    }
}

/// Sufficient statistics, summed over a corpus.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BleuStats {
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub hyp_len: u64,
    pub ref_len: u64,
}

pub(crate) fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> BTreeMap<&'a [&'a str], u64> {
    let mut counts = BTreeMap::new();
    if n > 0 && tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

impl BleuStats {
    fn new(max_n: usize) -> Self {
        BleuStats {
            matches: alloc::vec![0; max_n],
            totals: alloc::vec![0; max_n],
            hyp_len: 0,
            ref_len: 0,
        }
    }

    fn add(&mut self, hyp: &[&str], refs: &[Vec<&str>]) {
        for n in 1..=self.matches.len() {
            let hyp_counts = ngram_counts(hyp, n);
            let mut max_ref: BTreeMap<&[&str], u64> = BTreeMap::new();
            for r in refs {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            let clipped: u64 = hyp_counts
                .iter()
                .map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0)))
                .sum();
            self.matches[n - 1] += clipped;
            self.totals[n - 1] += hyp.len().saturating_sub(n - 1) as u64;
        }
        self.hyp_len += hyp.len() as u64;
        // Closest reference length; ties go to the shorter one.
        let h = hyp.len() as i64;
        let closest = refs
            .iter()
            .map(|r| r.len() as i64)
            .min_by_key(|&l| ((l - h).abs(), l))
            .unwrap_or(0);
        self.ref_len += closest as u64;
    }

    pub fn score(&self, smoothing: Smoothing) -> f64 {
        let max_n = self.matches.len();
        if self.hyp_len == 0 || max_n == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for (m, t) in self.matches.iter().zip(&self.totals) {
            let p = match (m, smoothing) {
                (0, Smoothing::None) => return 0.0,
                (0, Smoothing::Epsilon(eps)) => eps / (*t).max(1) as f64,
                _ => *m as f64 / *t as f64,
            };
            log_sum += libm::log(p);
        }
        let c = self.hyp_len as f64;
        let r = self.ref_len as f64;
        let bp = if c > r { 1.0 } else { libm::exp(1.0 - r / c) };
        bp * libm::exp(log_sum / max_n as f64)
    }
}

/// BLEU over `(hypothesis, references)` pairs with statistics pooled across
/// the corpus.
pub fn corpus_bleu(pairs: &[(&str, &[&str])], cfg: &BleuConfig) -> Result<f64, MetricError> {
    if cfg.max_n == 0 {
        return Err(MetricError::InvalidOrder);
    }
    let mut stats = BleuStats::new(cfg.max_n);
    for (i, (hyp, refs)) in pairs.iter().enumerate() {
        let hyp_tokens = tokenize(hyp);
        if hyp_tokens.is_empty() {
            return Err(MetricError::EmptyHypothesis { index: i });
        }
        if refs.is_empty() {
            return Err(MetricError::NoReferences { index: i });
        }
        let ref_tokens: Vec<Vec<String>> = refs.iter().map(|r| tokenize(r)).collect();
        let h: Vec<&str> = hyp_tokens.iter().map(String::as_str).collect();
        let r: Vec<Vec<&str>> = ref_tokens
            .iter()
            .map(|t| t.iter().map(String::as_str).collect())
            .collect();
        stats.add(&h, &r);
    }
    if pairs.is_empty() {
        return Err(MetricError::EmptyBatch);
    }
    Ok(stats.score(cfg.smoothing))
}

/// BLEU of one hypothesis against its references.
pub fn bleu(hypothesis: &str, references: &[&str], cfg: &BleuConfig) -> Result<f64, MetricError> {
    corpus_bleu(&[(hypothesis, references)], cfg)
}
