//! Overlapping sliding-window chunking of a support set.
//!
//! Every support abstract is prefixed with [`SUPPORT_MARKER`] and the marked
//! abstracts are concatenated into one unit stream. Windows of `cap` units are
//! taken every `cap - overlap` units, so consecutive chunks share exactly
//! `overlap` units and a window may start or end in the middle of an abstract.
//! Each chunk records which part of which abstract it holds as [`Span`]s, with
//! offsets counted in units of the marked abstract (`"SP: " + text`).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{MetaRecord, SupportAbstract};

/// Prefix written in front of every support abstract in the chunk stream.
pub const SUPPORT_MARKER: &str = "SP: ";
pub const DEFAULT_CAP: usize = 2000;
pub const DEFAULT_OVERLAP: usize = 200;

/// How text length is counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureUnit {
    /// Maximal runs of non-whitespace characters.
    #[default]
    WhitespaceToken,
    /// Unicode scalar values.
    Character,
}

impl MeasureUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            MeasureUnit::WhitespaceToken => "whitespace_token",
            MeasureUnit::Character => "character",
        }
    }

    /// Splits `text` into its units, in order.
    pub fn split(self, text: &str) -> Vec<&str> {
        match self {
            MeasureUnit::WhitespaceToken => text.split_whitespace().collect(),
            MeasureUnit::Character => text
                .char_indices()
                .map(|(i, c)| &text[i..i + c.len_utf8()])
                .collect(),
        }
    }

    /// String placed between units when they are joined back into text.
    /// Joining never changes the unit count.
    pub fn joiner(self) -> &'static str {
        match self {
            MeasureUnit::WhitespaceToken => " ",
            MeasureUnit::Character => "",
        }
    }

    pub fn join(self, units: &[&str]) -> String {
        units.join(self.joiner())
    }
}

impl fmt::Display for MeasureUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasureUnit {
    type Err = ChunkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whitespace_token" | "whitespace" | "token" | "tokens" => Ok(MeasureUnit::WhitespaceToken),
            "character" | "char" | "chars" => Ok(MeasureUnit::Character),
            other => Err(ChunkError::UnknownUnit(other.to_string())),
        }
    }
}

/// Length of `text` in `unit`s.
pub fn measure(text: &str, unit: MeasureUnit) -> usize {
    match unit {
        MeasureUnit::WhitespaceToken => text.split_whitespace().count(),
        MeasureUnit::Character => text.chars().count(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChunkError {
    #[error("chunk cap must be positive")]
    ZeroCap,
    #[error("overlap {overlap} must be smaller than cap {cap}")]
    OverlapTooLarge { overlap: usize, cap: usize },
    #[error("support set is empty")]
    NoSupports,
    #[error("support abstract {0:?} is empty")]
    EmptyAbstract(String),
    #[error("support id {0:?} appears more than once")]
    DuplicateSupport(String),
    #[error("unknown measure unit {0:?} (expected whitespace_token or character)")]
    UnknownUnit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkConfig {
    pub cap: usize,
    pub overlap: usize,
    pub unit: MeasureUnit,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig {
            cap: DEFAULT_CAP,
            overlap: DEFAULT_OVERLAP,
            unit: MeasureUnit::WhitespaceToken,
        }
    }
}

impl ChunkConfig {
    pub fn new(cap: usize, overlap: usize, unit: MeasureUnit) -> Result<Self, ChunkError> {
        let cfg = ChunkConfig { cap, overlap, unit };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ChunkError> {
        if self.cap == 0 {
            return Err(ChunkError::ZeroCap);
        }
        if self.overlap >= self.cap {
            return Err(ChunkError::OverlapTooLarge {
                overlap: self.overlap,
                cap: self.cap,
            });
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.cap - self.overlap
    }

    /// Number of windows over a stream of `len` units.
    pub fn expected_chunks(&self, len: usize) -> usize {
        if len <= self.cap {
            1
        } else {
            (len - self.cap).div_ceil(self.stride()) + 1
        }
    }
}

/// Half-open unit interval `[start, end)` of one marked support abstract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub support_id: String,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub record_id: String,
    /// 1-based position within its chunk set.
    pub seq: usize,
    pub text: String,
    pub spans: Vec<Span>,
}

impl Chunk {
    pub fn len_units(&self, unit: MeasureUnit) -> usize {
        measure(&self.text, unit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSet {
    pub record_id: String,
    pub chunks: Vec<Chunk>,
    pub cap: usize,
    pub overlap: usize,
    pub unit: MeasureUnit,
}

impl ChunkSet {
    pub fn k(&self) -> usize {
        self.chunks.len()
    }

    pub fn config(&self) -> ChunkConfig {
        ChunkConfig {
            cap: self.cap,
            overlap: self.overlap,
            unit: self.unit,
        }
    }
}

/// One support abstract with its marker applied.
struct Segment<'a> {
    support_id: &'a str,
    text: String,
}

fn segments<'a>(supports: &'a [SupportAbstract], unit: MeasureUnit) -> Result<Vec<Segment<'a>>, ChunkError> {
    if supports.is_empty() {
        return Err(ChunkError::NoSupports);
    }
    let mut seen = BTreeMap::new();
    let mut out = Vec::with_capacity(supports.len());
    for (i, s) in supports.iter().enumerate() {
        let body = s.text.trim();
        if body.is_empty() {
            return Err(ChunkError::EmptyAbstract(s.id.clone()));
        }
        if seen.insert(s.id.as_str(), ()).is_some() {
            return Err(ChunkError::DuplicateSupport(s.id.clone()));
        }
        let mut text = format!("{SUPPORT_MARKER}{body}");
        // Character streams keep a line break between abstracts; token
        // streams are separated by the joiner already.
        if unit == MeasureUnit::Character && i + 1 < supports.len() {
            text.push('\n');
        }
        out.push(Segment {
            support_id: &s.id,
            text,
        });
    }
    Ok(out)
}

struct StreamUnit<'a> {
    segment: usize,
    pos: usize,
    text: &'a str,
}

fn stream_units<'a>(segs: &'a [Segment<'_>], unit: MeasureUnit) -> Vec<StreamUnit<'a>> {
    let mut units = Vec::new();
    for (si, seg) in segs.iter().enumerate() {
        for (pos, text) in unit.split(&seg.text).into_iter().enumerate() {
            units.push(StreamUnit { segment: si, pos, text });
        }
    }
    units
}

/// The full marked stream a support set is chunked from, joined per `unit`.
pub fn support_stream(supports: &[SupportAbstract], unit: MeasureUnit) -> Result<String, ChunkError> {
    let segs = segments(supports, unit)?;
    let units = stream_units(&segs, unit);
    let texts: Vec<&str> = units.iter().map(|u| u.text).collect();
    Ok(unit.join(&texts))
}

/// Splits the support set of one record into overlapping windows.
pub fn chunk_support_set(
    record_id: &str,
    supports: &[SupportAbstract],
    cfg: &ChunkConfig,
) -> Result<ChunkSet, ChunkError> {
    cfg.validate()?;
    let segs = segments(supports, cfg.unit)?;
    let units = stream_units(&segs, cfg.unit);
    let total = units.len();

    let mut chunks = Vec::with_capacity(cfg.expected_chunks(total));
    let mut start = 0;
    loop {
        let end = (start + cfg.cap).min(total);
        let window = &units[start..end];
        let texts: Vec<&str> = window.iter().map(|u| u.text).collect();

        let mut spans: Vec<Span> = Vec::new();
        for u in window {
            let sid = segs[u.segment].support_id;
            match spans.last_mut() {
                Some(last) if last.support_id == sid && last.end == u.pos => last.end += 1,
                _ => spans.push(Span {
                    support_id: sid.to_string(),
                    start: u.pos,
                    end: u.pos + 1,
                }),
            }
        }

        let seq = chunks.len() + 1;
        chunks.push(Chunk {
            id: format!("{record_id}#{seq}"),
            record_id: record_id.to_string(),
            seq,
            text: cfg.unit.join(&texts),
            spans,
        });
        if end == total {
            break;
        }
        start += cfg.stride();
    }

    Ok(ChunkSet {
        record_id: record_id.to_string(),
        chunks,
        cap: cfg.cap,
        overlap: cfg.overlap,
        unit: cfg.unit,
    })
}

pub fn chunk_record(record: &MetaRecord, cfg: &ChunkConfig) -> Result<ChunkSet, ChunkError> {
    chunk_support_set(&record.id, &record.supports, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationRule {
    /// Chunk set parameters or the source support set are unusable.
    Config,
    /// A chunk is longer than the cap, or a non-final chunk is shorter than it.
    Cap,
    /// Some stream units are not in any chunk.
    Coverage,
    /// Consecutive chunks do not share exactly `overlap` units.
    Overlap,
    /// A span is empty, unknown, out of bounds, or not contiguous.
    Span,
    /// Chunk text does not match the units its spans point at.
    Text,
    /// Chunk sequence numbers are not 1..=k in order.
    Order,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub chunk_id: Option<String>,
    pub rule: ViolationRule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.chunk_id {
            Some(id) => write!(f, "{:?} in chunk {id}: {}", self.rule, self.detail),
            None => write!(f, "{:?}: {}", self.rule, self.detail),
        }
    }
}

fn violation(chunk_id: Option<&str>, rule: ViolationRule, detail: String) -> Violation {
    Violation {
        chunk_id: chunk_id.map(ToString::to_string),
        rule,
        detail,
    }
}

/// Checks a chunk set against the support set it claims to cover.
///
/// Returns an empty list iff the cap, coverage, overlap and provenance rules
/// all hold.
pub fn verify_chunkset(cs: &ChunkSet, supports: &[SupportAbstract]) -> Vec<Violation> {
    use ViolationRule::*;

    let mut out = Vec::new();
    let cfg = cs.config();
    if let Err(e) = cfg.validate() {
        out.push(violation(None, Config, e.to_string()));
        return out;
    }
    let segs = match segments(supports, cs.unit) {
        Ok(s) => s,
        Err(e) => {
            out.push(violation(None, Config, e.to_string()));
            return out;
        }
    };
    let units = stream_units(&segs, cs.unit);
    let total = units.len();

    // support id -> (segment index, stream offset, length)
    let mut layout: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    let mut offset = 0;
    for (si, seg) in segs.iter().enumerate() {
        let len = measure(&seg.text, cs.unit);
        layout.insert(seg.support_id, (si, offset, len));
        offset += len;
    }

    if cs.chunks.is_empty() {
        out.push(violation(None, Coverage, format!("no chunks for a stream of {total} units")));
        return out;
    }

    // Per chunk stream range, None when the spans are unusable.
    let mut ranges: Vec<Option<(usize, usize)>> = Vec::with_capacity(cs.chunks.len());
    let mut cover = alloc::vec![0i64; total + 1];

    for (i, chunk) in cs.chunks.iter().enumerate() {
        let id = Some(chunk.id.as_str());
        if chunk.seq != i + 1 {
            out.push(violation(id, Order, format!("seq {} at position {}", chunk.seq, i + 1)));
        }
        let len = measure(&chunk.text, cs.unit);
        if len == 0 {
            out.push(violation(id, Cap, "chunk is empty".to_string()));
        }
        if len > cs.cap {
            out.push(violation(id, Cap, format!("{len} units exceeds cap {}", cs.cap)));
        }
        if chunk.spans.is_empty() {
            out.push(violation(id, Span, "chunk has no spans".to_string()));
            ranges.push(None);
            continue;
        }

        let mut range: Option<(usize, usize)> = None;
        let mut span_ok = true;
        for span in &chunk.spans {
            let Some(&(_, seg_off, seg_len)) = layout.get(span.support_id.as_str()) else {
                out.push(violation(id, Span, format!("unknown support {:?}", span.support_id)));
                span_ok = false;
                break;
            };
            if span.is_empty() || span.end > seg_len {
                out.push(violation(
                    id,
                    Span,
                    format!(
                        "span [{}, {}) of {:?} outside [0, {seg_len})",
                        span.start, span.end, span.support_id
                    ),
                ));
                span_ok = false;
                break;
            }
            let (s, e) = (seg_off + span.start, seg_off + span.end);
            range = match range {
                None => Some((s, e)),
                Some((rs, re)) if re == s => Some((rs, e)),
                Some(_) => {
                    out.push(violation(
                        id,
                        Span,
                        format!("span of {:?} is not contiguous with the previous span", span.support_id),
                    ));
                    span_ok = false;
                    break;
                }
            };
        }
        if !span_ok {
            ranges.push(None);
            continue;
        }
        let (s, e) = range.expect("spans non-empty");

        let expected: Vec<&str> = units[s..e].iter().map(|u| u.text).collect();
        if cs.unit.split(&chunk.text) != expected {
            out.push(violation(id, Text, format!("text differs from stream units [{s}, {e})")));
        }
        cover[s] += 1;
        cover[e] -= 1;
        ranges.push(Some((s, e)));
    }

    for i in 0..cs.chunks.len() {
        let Some((s, e)) = ranges[i] else { continue };
        let id = Some(cs.chunks[i].id.as_str());
        let is_last = i + 1 == cs.chunks.len();
        if !is_last && e - s != cs.cap {
            out.push(violation(id, Cap, format!("non-final chunk has {} units, cap is {}", e - s, cs.cap)));
        }
        if let Some(Some((ns, _))) = ranges.get(i + 1) {
            let shared = e.saturating_sub(*ns);
            if *ns > e || shared != cs.overlap {
                out.push(violation(
                    id,
                    Overlap,
                    format!(
                        "shares {} units with {}, expected {}",
                        if *ns > e { 0 } else { shared },
                        cs.chunks[i + 1].id,
                        cs.overlap
                    ),
                ));
            }
        }
    }

    // Prefix sums over the difference array give per-unit chunk counts.
    let mut running = 0i64;
    let mut gap_start: Option<usize> = None;
    for pos in 0..=total {
        if pos < total {
            running += cover[pos];
        }
        let uncovered = pos < total && running == 0;
        match (uncovered, gap_start) {
            (true, None) => gap_start = Some(pos),
            (false, Some(g)) => {
                let before = ranges
                    .iter()
                    .enumerate()
                    .rev()
                    .find_map(|(i, r)| r.filter(|&(_, e)| e <= g).map(|_| i))
                    .map(|i| cs.chunks[i].id.as_str());
                let first = &segs[units[g].segment];
                let last = &segs[units[pos - 1].segment];
                out.push(violation(
                    before,
                    Coverage,
                    format!(
                        "stream units [{g}, {pos}) are not covered (support {:?} to {:?})",
                        first.support_id, last.support_id
                    ),
                ));
                gap_start = None;
            }
            _ => {}
        }
    }

    out
}
