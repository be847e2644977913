use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::GenerationError;
use crate::chunker::{measure, Chunk, MeasureUnit, Span};
use crate::index::SearchHit;

/// Separator between chunks in an assembled context.
pub const PART_SEPARATOR: &str = "\n\n";

/// The portion of one retrieved chunk that made it into the context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPart {
    pub chunk_id: String,
    pub rank: usize,
    pub score: f64,
    /// Spans kept after removing units already supplied by earlier chunks.
    pub spans: Vec<Span>,
    pub units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledContext {
    pub text: String,
    pub parts: Vec<ContextPart>,
    /// Chunks left out because they did not fit.
    pub dropped: Vec<String>,
    /// Chunks left out because every unit was already present.
    pub duplicates: Vec<String>,
}

/// Sorted, non-overlapping covered intervals.
#[derive(Default)]
struct Covered(Vec<(usize, usize)>);

impl Covered {
    fn uncovered(&self, start: usize, end: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut cur = start;
        for &(s, e) in &self.0 {
            if e <= cur {
                continue;
            }
            if s >= end {
                break;
            }
            if s > cur {
                out.push((cur, s));
            }
            cur = cur.max(e);
            if cur >= end {
                break;
            }
        }
        if cur < end {
            out.push((cur, end));
        }
        out
    }

    fn insert(&mut self, start: usize, end: usize) {
        self.0.push((start, end));
        self.0.sort_unstable();
        let mut merged: Vec<(usize, usize)> = Vec::with_capacity(self.0.len());
        for &(s, e) in &self.0 {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        self.0 = merged;
    }
}

/// Concatenates retrieved chunks in rank order until the next one would push
/// the prompt past `budget`.
///
/// `instruction_units` is what the prompt template itself consumes. Text that
/// an earlier chunk of the same record already supplied (the overlap between
/// consecutive windows) is not repeated. Chunks are only ever included whole
/// or, after de-duplication, unit by unit; no unit is cut.
pub fn assemble_context(
    hits: &[SearchHit],
    chunks: &BTreeMap<String, Chunk>,
    budget: usize,
    instruction_units: usize,
    unit: MeasureUnit,
) -> Result<AssembledContext, GenerationError> {
    if hits.is_empty() {
        return Err(GenerationError::RetrievalFailure);
    }
    if budget <= instruction_units {
        return Err(GenerationError::BudgetTooSmall {
            budget,
            instruction: instruction_units,
        });
    }
    let available = budget - instruction_units;

    let mut covered: BTreeMap<(String, String), Covered> = BTreeMap::new();
    let mut text = String::new();
    let mut used = 0usize;
    let mut parts = Vec::new();
    let mut dropped = Vec::new();
    let mut duplicates = Vec::new();

    for (i, hit) in hits.iter().enumerate() {
        let chunk = chunks
            .get(&hit.chunk_id)
            .ok_or_else(|| GenerationError::UnknownChunk(hit.chunk_id.clone()))?;
        let units = unit.split(&chunk.text);

        // Chunk-local unit ranges that are not yet in the context.
        let mut kept_spans: Vec<Span> = Vec::new();
        let mut local: Vec<(usize, usize)> = Vec::new();
        let mut offset = 0;
        for span in &chunk.spans {
            let key = (chunk.record_id.clone(), span.support_id.clone());
            let free = covered.get(&key).map_or_else(
                || alloc::vec![(span.start, span.end)],
                |c| c.uncovered(span.start, span.end),
            );
            for (s, e) in free {
                let from = offset + (s - span.start);
                let to = offset + (e - span.start);
                match local.last_mut() {
                    Some(last) if last.1 == from => last.1 = to,
                    _ => local.push((from, to)),
                }
                kept_spans.push(Span {
                    support_id: span.support_id.clone(),
                    start: s,
                    end: e,
                });
            }
            offset += span.len();
        }
        if offset != units.len() {
            return Err(GenerationError::MalformedChunk(chunk.id.clone()));
        }

        if kept_spans.is_empty() {
            duplicates.push(chunk.id.clone());
            continue;
        }
        let piece = local
            .iter()
            .map(|&(from, to)| unit.join(&units[from..to]))
            .collect::<Vec<_>>()
            .join(PART_SEPARATOR);
        let candidate = if text.is_empty() {
            piece
        } else {
            [text.as_str(), PART_SEPARATOR, piece.as_str()].concat()
        };
        let total = measure(&candidate, unit);
        if total > available {
            dropped.extend(hits[i..].iter().map(|h| h.chunk_id.clone()));
            break;
        }
        let part_units = kept_spans.iter().map(Span::len).sum();
        used = total;
        text = candidate;
        for s in &kept_spans {
            covered
                .entry((chunk.record_id.clone(), s.support_id.clone()))
                .or_default()
                .insert(s.start, s.end);
        }
        parts.push(ContextPart {
            chunk_id: chunk.id.clone(),
            rank: hit.rank,
            score: hit.score,
            spans: kept_spans,
            units: part_units,
        });
    }

    if parts.is_empty() {
        return Err(GenerationError::NothingFits {
            available,
            chunk: hits[0].chunk_id.to_string(),
        });
    }
    debug_assert!(used <= available);
    Ok(AssembledContext {
        text,
        parts,
        dropped,
        duplicates,
    })
}
