//! Prompting and generation: templates, context assembly under a length
//! budget, the job state machine, retrying calls to a text generator, and the
//! per-record retrieve-then-generate driver.

mod context;
mod prompt;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub use context::{assemble_context, AssembledContext, ContextPart, PART_SEPARATOR};
pub use prompt::{render_prompt, PromptTemplate, TemplateId, CONTEXT_SLOT, PROMPT_1, PROMPT_2};

use crate::chunker::{measure, Chunk, MeasureUnit};
use crate::corpus::MetaRecord;
use crate::embed::{EmbedError, Embedder};
use crate::index::{IndexError, SearchHit, VectorIndex, DEFAULT_TOP_K};

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_CONTEXT_BUDGET: usize = 4096;
pub const DEFAULT_MAX_OUTPUT: usize = 512;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error("unknown prompt template {0:?} (expected prompt1, prompt2 or custom)")]
    UnknownTemplate(String),
    #[error("template has no {CONTEXT_SLOT} slot")]
    MissingSlot,
    #[error("context is empty")]
    EmptyContext,
    #[error("retrieval returned no chunks")]
    RetrievalFailure,
    #[error("context budget {budget} does not exceed the instruction's {instruction} units")]
    BudgetTooSmall { budget: usize, instruction: usize },
    #[error("top chunk {chunk} does not fit in the {available} units left for context")]
    NothingFits { available: usize, chunk: String },
    #[error("retrieved chunk {0:?} is not in the chunk store")]
    UnknownChunk(String),
    #[error("chunk {0:?} has spans that do not match its text")]
    MalformedChunk(String),
    #[error("rendered prompt has {units} units, budget is {budget}")]
    BudgetExceeded { units: usize, budget: usize },
    #[error("job cannot move from {from} to {to}")]
    InvalidTransition { from: JobStatus, to: JobStatus },
    #[error("index was built with {index} units, pipeline measures {pipeline}")]
    UnitMismatch { index: MeasureUnit, pipeline: MeasureUnit },
    #[error("temperature must be a finite number >= 0, got {0}")]
    InvalidTemperature(f64),
    #[error("max output length must be positive")]
    ZeroMaxOutput,
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_output_units: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: DEFAULT_TEMPERATURE,
            max_output_units: DEFAULT_MAX_OUTPUT,
            seed: None,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(GenerationError::InvalidTemperature(self.temperature));
        }
        if self.max_output_units == 0 {
            return Err(GenerationError::ZeroMaxOutput);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl fmt::Display for JobStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JobStatus::Pending => "pending",
            JobStatus::Running => "running",
            JobStatus::Done => "done",
            JobStatus::Failed => "failed",
        })
    }
}

/// One generation request and its full provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub id: String,
    pub record_id: String,
    pub template: TemplateId,
    pub model: String,
    pub params: SamplingParams,
    pub unit: MeasureUnit,
    #[serde(default)]
    pub retrieved: Vec<SearchHit>,
    #[serde(default)]
    pub context: Vec<ContextPart>,
    #[serde(default)]
    pub assembled_prompt: String,
    #[serde(default)]
    pub prompt_units: usize,
    #[serde(default)]
    pub output: Option<String>,
    pub status: JobStatus,
    #[serde(default)]
    pub failure: Option<String>,
    #[serde(default)]
    pub attempts: u32,
}

impl GenerationJob {
    pub fn new(
        id: impl Into<String>,
        record_id: impl Into<String>,
        template: TemplateId,
        model: impl Into<String>,
        params: SamplingParams,
        unit: MeasureUnit,
    ) -> Self {
        GenerationJob {
            id: id.into(),
            record_id: record_id.into(),
            template,
            model: model.into(),
            params,
            unit,
            retrieved: Vec::new(),
            context: Vec::new(),
            assembled_prompt: String::new(),
            prompt_units: 0,
            output: None,
            status: JobStatus::Pending,
            failure: None,
            attempts: 0,
        }
    }

    /// Moves the job forward: pending -> running -> done | failed, or
    /// pending -> failed.
    pub fn advance(&mut self, to: JobStatus) -> Result<(), GenerationError> {
        use JobStatus::*;
        let ok = matches!(
            (self.status, to),
            (Pending, Running) | (Pending, Failed) | (Running, Done) | (Running, Failed)
        );
        if !ok {
            return Err(GenerationError::InvalidTransition { from: self.status, to });
        }
        self.status = to;
        Ok(())
    }

    pub fn fail(&mut self, cause: impl Into<String>) {
        if self.advance(JobStatus::Failed).is_ok() {
            self.failure = Some(cause.into());
        }
    }

    pub fn is_done(&self) -> bool {
        self.status == JobStatus::Done
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EndpointError {
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("endpoint returned an empty completion")]
    EmptyOutput,
}

impl EndpointError {
    /// Worth retrying: timeouts, connection failures, 408, 429 and 5xx.
    pub fn is_transient(&self) -> bool {
        match self {
            EndpointError::Timeout | EndpointError::Transport(_) => true,
            EndpointError::Status { code, .. } => matches!(code, 408 | 429 | 500..=599),
            EndpointError::Malformed(_) | EndpointError::EmptyOutput => false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub params: &'a SamplingParams,
}

/// A text-generation model behind some endpoint.
pub trait TextGenerator: Send + Sync {
    fn model(&self) -> &str;
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, EndpointError>;
}

/// Offline double that answers every prompt with the same text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CannedGenerator {
    pub model: String,
    pub text: String,
}

impl CannedGenerator {
    pub const DEFAULT_TEXT: &'static str = "This meta-analysis pooled the randomized controlled trials described in the provided abstracts. The pooled estimates indicate a significant effect on the primary outcome (p < 0.05) with moderate heterogeneity across studies.";

    pub fn new(model: impl Into<String>, text: impl Into<String>) -> Self {
        CannedGenerator {
            model: model.into(),
            text: text.into(),
        }
    }
}

impl Default for CannedGenerator {
    fn default() -> Self {
        CannedGenerator::new("canned", Self::DEFAULT_TEXT)
    }
}

impl TextGenerator for CannedGenerator {
    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, _request: &CompletionRequest<'_>) -> Result<String, EndpointError> {
        Ok(self.text.clone())
    }
}

/// Bounded exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based).
    pub fn delay_ms(&self, retry: u32) -> u64 {
        let factor = 1u64.checked_shl(retry.min(63)).unwrap_or(u64::MAX);
        self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms)
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep_ms(&self, ms: u64);
}

/// Never waits; for tests and offline doubles.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoSleep;

impl Sleeper for NoSleep {
    fn sleep_ms(&self, _ms: u64) {}
}

/// Runs a pending job that already carries its prompt. Endpoint failures are
/// recorded on the returned job rather than returned as errors.
pub fn generate<G, S>(
    mut job: GenerationJob,
    generator: &G,
    retry: &RetryPolicy,
    sleeper: &S,
) -> Result<GenerationJob, GenerationError>
where
    G: TextGenerator + ?Sized,
    S: Sleeper + ?Sized,
{
    job.advance(JobStatus::Running)?;
    let request = CompletionRequest {
        prompt: &job.assembled_prompt,
        params: &job.params,
    };
    let mut retries = 0;
    let result = loop {
        job.attempts += 1;
        match generator.complete(&request) {
            Ok(text) if text.trim().is_empty() => break Err(EndpointError::EmptyOutput),
            Ok(text) => break Ok(text),
            Err(e) if e.is_transient() && retries < retry.max_retries => {
                sleeper.sleep_ms(retry.delay_ms(retries));
                retries += 1;
            }
            Err(e) => break Err(e),
        }
    };
    match result {
        Ok(text) => {
            job.output = Some(text);
            job.advance(JobStatus::Done)?;
        }
        Err(e) => {
            let attempts = job.attempts;
            job.fail(alloc::format!("{e} (after {attempts} attempts)"));
        }
    }
    Ok(job)
}

/// Everything needed to turn a record into a generated abstract.
pub struct RagPipeline<'a> {
    pub template: &'a PromptTemplate,
    pub params: SamplingParams,
    pub top_k: usize,
    pub context_budget: usize,
    pub unit: MeasureUnit,
    /// Retrieval query; the template instruction when `None`.
    pub query: Option<&'a str>,
    pub embedder: &'a dyn Embedder,
    pub index: &'a VectorIndex,
    pub chunks: &'a BTreeMap<String, Chunk>,
    pub generator: &'a dyn TextGenerator,
    pub retry: RetryPolicy,
    pub sleeper: &'a dyn Sleeper,
}

impl<'a> RagPipeline<'a> {
    pub fn new(
        template: &'a PromptTemplate,
        embedder: &'a dyn Embedder,
        index: &'a VectorIndex,
        chunks: &'a BTreeMap<String, Chunk>,
        generator: &'a dyn TextGenerator,
    ) -> Self {
        RagPipeline {
            template,
            params: SamplingParams::default(),
            top_k: DEFAULT_TOP_K,
            context_budget: DEFAULT_CONTEXT_BUDGET,
            unit: index.unit(),
            query: None,
            embedder,
            index,
            chunks,
            generator,
            retry: RetryPolicy::default(),
            sleeper: &NoSleep,
        }
    }

    pub fn query_text(&self) -> &str {
        self.query.unwrap_or_else(|| self.template.instruction())
    }
}

/// Retrieves the record's chunks for the query, assembles the prompt and
/// generates.
///
/// Endpoint failures end up as a failed job; problems before generation
/// (embedding, index, retrieval, budget) are returned as errors.
pub fn run_record(record: &MetaRecord, p: &RagPipeline<'_>) -> Result<GenerationJob, GenerationError> {
    p.params.validate()?;
    if p.index.unit() != p.unit {
        return Err(GenerationError::UnitMismatch {
            index: p.index.unit(),
            pipeline: p.unit,
        });
    }
    let query = p.embedder.embed(p.query_text())?;
    let hits = p.index.search(&query, p.top_k, Some(&record.id))?;
    let overhead = p.template.overhead_units(p.unit);
    let ctx = assemble_context(&hits, p.chunks, p.context_budget, overhead, p.unit)?;
    let prompt = render_prompt(p.template, &ctx.text)?;
    let units = measure(&prompt, p.unit);
    if units > p.context_budget {
        return Err(GenerationError::BudgetExceeded {
            units,
            budget: p.context_budget,
        });
    }

    let mut job = GenerationJob::new(
        record.id.clone(),
        record.id.clone(),
        p.template.id,
        p.generator.model().to_string(),
        p.params,
        p.unit,
    );
    job.retrieved = hits;
    job.context = ctx.parts;
    job.assembled_prompt = prompt;
    job.prompt_units = units;
    generate(job, p.generator, &p.retry, p.sleeper)
}
