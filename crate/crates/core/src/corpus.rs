//! Record model, validation, seeded splits and dataset statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chunker::{chunk_record, measure, ChunkConfig, ChunkError, MeasureUnit};

/// Abstract of one support article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportAbstract {
    pub id: String,
    pub text: String,
}

/// One meta-analysis scenario: the meta-article abstract (the generation
/// target) and the ordered abstracts of the articles it synthesises.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaRecord {
    pub id: String,
    pub meta_abstract: String,
    pub supports: Vec<SupportAbstract>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("record has an empty id")]
    EmptyRecordId,
    #[error("record {0:?} has an empty meta abstract")]
    EmptyMetaAbstract(String),
    #[error("record {0:?} has no support abstracts")]
    NoSupports(String),
    #[error("record {record:?}: support {support:?} is empty")]
    EmptySupport { record: String, support: String },
    #[error("record {record:?}: support id {support:?} is not unique")]
    DuplicateSupportId { record: String, support: String },
    #[error("duplicate record id {0:?}")]
    DuplicateRecordId(String),
    #[error("split asks for {requested} records but the corpus has {available}")]
    SplitTooLarge { requested: usize, available: usize },
}

impl MetaRecord {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.id.trim().is_empty() {
            return Err(CorpusError::EmptyRecordId);
        }
        if self.meta_abstract.trim().is_empty() {
            return Err(CorpusError::EmptyMetaAbstract(self.id.clone()));
        }
        if self.supports.is_empty() {
            return Err(CorpusError::NoSupports(self.id.clone()));
        }
        let mut ids = BTreeSet::new();
        for s in &self.supports {
            if s.text.trim().is_empty() {
                return Err(CorpusError::EmptySupport {
                    record: self.id.clone(),
                    support: s.id.clone(),
                });
            }
            if !ids.insert(s.id.as_str()) {
                return Err(CorpusError::DuplicateSupportId {
                    record: self.id.clone(),
                    support: s.id.clone(),
                });
            }
        }
        Ok(())
    }

    /// Summed length of the support abstracts, without chunk markers.
    pub fn input_len(&self, unit: MeasureUnit) -> usize {
        self.supports.iter().map(|s| measure(&s.text, unit)).sum()
    }

    pub fn label_len(&self, unit: MeasureUnit) -> usize {
        measure(&self.meta_abstract, unit)
    }
}

/// A validated collection of records with unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    records: Vec<MetaRecord>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, records: Vec<MetaRecord>) -> Result<Self, CorpusError> {
        let mut ids = BTreeSet::new();
        for r in &records {
            r.validate()?;
            if !ids.insert(r.id.as_str()) {
                return Err(CorpusError::DuplicateRecordId(r.id.clone()));
            }
        }
        Ok(Corpus {
            name: name.into(),
            records,
        })
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Corpus {
            name: name.into(),
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[MetaRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<MetaRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&MetaRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn total_supports(&self) -> usize {
        self.records.iter().map(|r| r.supports.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    pub shuffle_seed: u64,
}

impl SplitSpec {
    pub fn total(&self) -> usize {
        self.train_count + self.val_count + self.test_count
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Corpus,
    pub val: Corpus,
    pub test: Corpus,
}

/// Partitions whole records into train/val/test.
///
/// Records are drawn by a seeded ChaCha8 shuffle, so a given `(corpus, seed)`
/// always gives the same split. Within each part, records keep their corpus
/// order.
pub fn split_corpus(corpus: &Corpus, spec: &SplitSpec) -> Result<Splits, CorpusError> {
    let n = corpus.len();
    if spec.total() > n {
        return Err(CorpusError::SplitTooLarge {
            requested: spec.total(),
            available: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.shuffle_seed);
    order.shuffle(&mut rng);

    let cut = |from: usize, count: usize, suffix: &str| {
        let mut picked: Vec<usize> = order[from..from + count].to_vec();
        picked.sort_unstable();
        Corpus {
            name: format!("{}-{suffix}", corpus.name),
            records: picked.into_iter().map(|i| corpus.records[i].clone()).collect(),
        }
    };
    let train = cut(0, spec.train_count, "train");
    let val = cut(spec.train_count, spec.val_count, "val");
    let test = cut(spec.train_count + spec.val_count, spec.test_count, "test");
    Ok(Splits { train, val, test })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LengthSummary {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

impl LengthSummary {
    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>) -> Self {
        let mut count = 0usize;
        let mut sum = 0u128;
        let mut min = usize::MAX;
        let mut max = 0;
        for l in lengths {
            count += 1;
            sum += l as u128;
            min = min.min(l);
            max = max.max(l);
        }
        if count == 0 {
            return LengthSummary::default();
        }
        LengthSummary {
            min,
            max,
            mean: sum as f64 / count as f64,
        }
    }
}

/// Dataset statistics in the shape of a "before chunking" table column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub unit: MeasureUnit,
    pub input: LengthSummary,
    pub label: LengthSummary,
    pub total_records: usize,
    pub total_supports: usize,
    /// Number of support abstracts per record -> number of records.
    pub support_count_histogram: BTreeMap<usize, usize>,
}

pub fn compute_stats(corpus: &Corpus, unit: MeasureUnit) -> DatasetStats {
    let mut histogram = BTreeMap::new();
    for r in corpus.records() {
        *histogram.entry(r.supports.len()).or_insert(0) += 1;
    }
    DatasetStats {
        unit,
        input: LengthSummary::from_lengths(corpus.records().iter().map(|r| r.input_len(unit))),
        label: LengthSummary::from_lengths(corpus.records().iter().map(|r| r.label_len(unit))),
        total_records: corpus.len(),
        total_supports: corpus.total_supports(),
        support_count_histogram: histogram,
    }
}

/// Statistics of the chunked corpus: one instance per (chunk, label) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkedStats {
    pub cap: usize,
    pub overlap: usize,
    pub unit: MeasureUnit,
    pub total_chunks: usize,
    pub chunk_length: LengthSummary,
}

pub fn compute_chunked_stats(corpus: &Corpus, cfg: &ChunkConfig) -> Result<ChunkedStats, ChunkError> {
    let mut lengths = Vec::new();
    for r in corpus.records() {
        let cs = chunk_record(r, cfg)?;
        lengths.extend(cs.chunks.iter().map(|c| c.len_units(cfg.unit)));
    }
    Ok(ChunkedStats {
        cap: cfg.cap,
        overlap: cfg.overlap,
        unit: cfg.unit,
        total_chunks: lengths.len(),
        chunk_length: LengthSummary::from_lengths(lengths),
    })
}
