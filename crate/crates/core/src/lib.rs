//! Core algorithms for retrieval-augmented synthesis of meta-analysis abstracts.
//!
//! This crate is `no_std` (it needs `alloc`) and does no IO. It covers:
//!
//! - [`corpus`]: the record model (a meta-analysis abstract plus its support
//!   abstracts), validation, seeded splits and dataset statistics.
//! - [`chunker`]: overlapping sliding-window decomposition of a support set.
//! - [`embed`] and [`index`]: the embedding interface, a deterministic hashing
//!   embedder, and an exact cosine top-k index.
//! - [`generation`]: prompt templates, budgeted context assembly, the job state
//!   machine and the per-record retrieval/generation driver.
//! - [`metrics`]: cosine similarity, the inverse cosine distance loss and its
//!   gradient, BLEU, ROUGE and SWGT.
//! - [`evaluation`]: the three-label human evaluation protocol with hard voting
//!   and per-model reports.
//!
//! File formats, HTTP endpoints and the command line live in the `metasynth`
//! crate.

#![no_std]

extern crate alloc;

pub mod chunker;
pub mod corpus;
pub mod embed;
pub mod evaluation;
pub mod generation;
pub mod index;
pub mod metrics;

pub use chunker::{
    chunk_record, chunk_support_set, measure, verify_chunkset, Chunk, ChunkConfig, ChunkError,
    ChunkSet, MeasureUnit, Span, Violation, ViolationRule,
};
pub use corpus::{
    compute_chunked_stats, compute_stats, split_corpus, ChunkedStats, Corpus, CorpusError,
    DatasetStats, LengthSummary, MetaRecord, SplitSpec, Splits, SupportAbstract,
};
pub use embed::{Embedder, EmbedError, EmbeddingVector, HashEmbedder};
pub use evaluation::{
    aggregate_labels, anonymize_evaluator, build_report, build_report_with, create_tasks,
    ClassMetrics, EvaluationBallot, EvaluationError, EvaluationTask, ModelReport, Progress,
    RelevanceLabel, TaskPool, TaskScores, TaskState, TieRule,
};
pub use generation::{
    assemble_context, generate, render_prompt, run_record, CannedGenerator, EndpointError,
    GenerationError, GenerationJob, JobStatus, PromptTemplate, RagPipeline, RetryPolicy,
    SamplingParams, TemplateId, TextGenerator,
};
pub use index::{IndexEntry, IndexError, SearchHit, UpsertReport, VectorIndex};
pub use metrics::{
    bleu, cosine_similarity, icd, icd_gradient, rouge_l, rouge_n, swgt, IcdParams, MetricError,
    MetricReport, RougeScore, SimilarityPair,
};
