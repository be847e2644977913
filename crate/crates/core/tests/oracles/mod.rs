//! Reference implementations used by the property tests. They trade speed for
//! obviousness and share no code with the library.
#![allow(dead_code)]

use std::cmp::Ordering;

use metasynth_core::{MeasureUnit, SupportAbstract};

/// Expected chunk: text plus `(support_id, start, end)` spans.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleChunk {
    pub text: String,
    pub spans: Vec<(String, usize, usize)>,
}

/// Every unit of the marked stream with its owner and position in its segment.
pub fn stream(supports: &[SupportAbstract], unit: MeasureUnit) -> Vec<(String, usize, String)> {
    let mut out = Vec::new();
    for (i, s) in supports.iter().enumerate() {
        let mut seg = format!("SP: {}", s.text.trim());
        match unit {
            MeasureUnit::WhitespaceToken => {
                for (p, w) in seg.split_whitespace().enumerate() {
                    out.push((s.id.clone(), p, w.to_string()));
                }
            }
            MeasureUnit::Character => {
                if i + 1 < supports.len() {
                    seg.push('\n');
                }
                for (p, c) in seg.chars().enumerate() {
                    out.push((s.id.clone(), p, c.to_string()));
                }
            }
        }
    }
    out
}

pub fn window_count(len: usize, cap: usize, overlap: usize) -> usize {
    if len <= cap {
        1
    } else {
        (len - cap).div_ceil(cap - overlap) + 1
    }
}

/// Windows `[i * stride, min(i * stride + cap, len))` for `i < k`.
pub fn brute_force_chunks(
    supports: &[SupportAbstract],
    cap: usize,
    overlap: usize,
    unit: MeasureUnit,
) -> Vec<OracleChunk> {
    let units = stream(supports, unit);
    let k = window_count(units.len(), cap, overlap);
    (0..k)
        .map(|i| {
            let start = i * (cap - overlap);
            let end = (start + cap).min(units.len());
            let window = &units[start..end];
            let words: Vec<&str> = window.iter().map(|u| u.2.as_str()).collect();
            let text = match unit {
                MeasureUnit::WhitespaceToken => words.join(" "),
                MeasureUnit::Character => words.concat(),
            };
            let mut spans: Vec<(String, usize, usize)> = Vec::new();
            for (id, pos, _) in window {
                match spans.last_mut() {
                    Some(last) if &last.0 == id => last.2 = pos + 1,
                    _ => spans.push((id.clone(), *pos, pos + 1)),
                }
            }
            OracleChunk { text, spans }
        })
        .collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Full sort by (score desc, id asc), then truncate.
pub fn brute_force_top_k(items: &[(String, Vec<f64>)], query: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> = items
        .iter()
        .map(|(id, v)| (id.clone(), cosine(v, query).clamp(-1.0, 1.0)))
        .collect();
    scored.sort_by(|a, b| match b.1.partial_cmp(&a.1).unwrap() {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    scored.truncate(k);
    scored
}

/// Mean of `1 / (max(cos, 0) + eps)`.
pub fn icd_reference(pairs: &[(Vec<f64>, Vec<f64>)], eps: f64) -> f64 {
    let total: f64 = pairs.iter().map(|(t, g)| 1.0 / (cosine(t, g).max(0.0) + eps)).sum();
    total / pairs.len() as f64
}
