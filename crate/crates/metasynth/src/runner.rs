//! Embedding chunks into an index and running generation over a corpus.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, PoisonError};
use std::time::Instant;

use metasynth_core::generation::{run_record, RagPipeline, TextGenerator};
use metasynth_core::index::{text_digest, IndexEntry, IndexError};
use metasynth_core::{
    CannedGenerator, Chunk, ChunkSet, EmbedError, Embedder, GenerationJob, HashEmbedder, JobStatus, MeasureUnit,
    MetaRecord, VectorIndex,
};
use serde::{Deserialize, Serialize};

use crate::config::{api_key, PipelineConfig, ENV_EMBEDDING_API_KEY, ENV_GENERATION_API_KEY};
use crate::corpus_io::{read_jsonl, IoError};
use crate::http::{ChatCompletionsClient, EndpointConfig, HttpEmbedder};

/// The configured embedder: HTTP when a URL is set, else the hashing double.
pub fn make_embedder(cfg: &PipelineConfig, env: impl Fn(&str) -> Option<String>) -> Box<dyn Embedder> {
    let e = &cfg.embedding;
    match &e.url {
        Some(url) => Box::new(HttpEmbedder::new(
            EndpointConfig {
                url: url.clone(),
                model: e.model.clone(),
                timeout_secs: e.timeout_secs,
                retry: e.retry,
            },
            api_key(ENV_EMBEDDING_API_KEY, env),
        )),
        None => Box::new(HashEmbedder::new(e.dim, e.seed)),
    }
}

/// The configured generator: HTTP when a URL is set, else the canned double.
pub fn make_generator(cfg: &PipelineConfig, env: impl Fn(&str) -> Option<String>) -> Box<dyn TextGenerator> {
    let g = &cfg.generation;
    match &g.url {
        Some(url) => Box::new(ChatCompletionsClient::new(
            EndpointConfig {
                url: url.clone(),
                model: g.model.clone(),
                timeout_secs: g.timeout_secs,
                retry: g.retry,
            },
            api_key(ENV_GENERATION_API_KEY, env),
        )),
        None => Box::new(CannedGenerator::new(
            g.model.clone(),
            g.canned_text.clone().unwrap_or_else(|| CannedGenerator::DEFAULT_TEXT.into()),
        )),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BuildIndexError {
    #[error("embedding failed: {0}")]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("no chunks to index")]
    NoChunks,
}

/// Embeds every chunk in batches of `batch_size`.
pub fn build_index(
    sets: &[ChunkSet],
    embedder: &dyn Embedder,
    batch_size: usize,
    unit: MeasureUnit,
) -> Result<VectorIndex, BuildIndexError> {
    let chunks: Vec<&Chunk> = sets.iter().flat_map(|s| &s.chunks).collect();
    if chunks.is_empty() {
        return Err(BuildIndexError::NoChunks);
    }
    let mut index: Option<VectorIndex> = None;
    for batch in chunks.chunks(batch_size.max(1)) {
        let texts: Vec<&str> = batch.iter().map(|c| c.text.as_str()).collect();
        let vectors = embedder.embed_batch(&texts)?;
        let idx = match &mut index {
            Some(i) => i,
            None => index.insert(VectorIndex::new(vectors[0].dim(), unit)?),
        };
        let entries = batch
            .iter()
            .zip(vectors)
            .map(|(c, vector)| IndexEntry {
                chunk_id: c.id.clone(),
                record_id: c.record_id.clone(),
                vector,
                text_digest: text_digest(&c.text),
            })
            .collect();
        idx.upsert(entries)?;
    }
    Ok(index.expect("at least one batch"))
}

/// Chunk ids whose index digest disagrees with the chunk dump, or that are
/// missing from either side.
pub fn stale_entries(index: &VectorIndex, chunks: &BTreeMap<String, Chunk>) -> Vec<String> {
    let mut out: Vec<String> = index
        .entries()
        .iter()
        .filter(|e| chunks.get(&e.chunk_id).is_none_or(|c| text_digest(&c.text) != e.text_digest))
        .map(|e| e.chunk_id.clone())
        .collect();
    out.extend(chunks.keys().filter(|id| index.get(id).is_none()).cloned());
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub record_id: String,
    pub cause: String,
}

/// One line of a run manifest. Timings are logged, not stored, so equal
/// inputs give byte-identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifestLine {
    Run {
        config: Box<PipelineConfig>,
        template_text: String,
        query: String,
        corpus_sha256: String,
        index_sha256: String,
        records: usize,
    },
    Job {
        job: Box<GenerationJob>,
    },
    Summary {
        done: usize,
        failed: usize,
        failures: Vec<Failure>,
    },
}

/// Appends job lines in record order even though workers finish out of order.
struct OrderedSink<W: Write> {
    out: W,
    next: usize,
    pending: BTreeMap<usize, GenerationJob>,
    jobs: Vec<GenerationJob>,
}

impl<W: Write> OrderedSink<W> {
    fn push(&mut self, pos: usize, job: GenerationJob) -> io::Result<()> {
        self.pending.insert(pos, job);
        while let Some(job) = self.pending.remove(&self.next) {
            let line = ManifestLine::Job {
                job: Box::new(job.clone()),
            };
            serde_json::to_writer(&mut self.out, &line).map_err(io::Error::other)?;
            self.out.write_all(b"\n")?;
            self.out.flush()?;
            self.jobs.push(job);
            self.next += 1;
        }
        Ok(())
    }
}

pub struct BatchOutcome {
    /// One job per record, in corpus order.
    pub jobs: Vec<GenerationJob>,
    pub failures: Vec<Failure>,
}

/// Runs every record through `pipeline` on `workers` threads. Failed records
/// become failed jobs; they never stop the batch. `reuse` holds finished
/// jobs from an earlier run that are kept as they are.
pub fn run_batch<W: Write + Send>(
    records: &[MetaRecord],
    pipeline: &RagPipeline<'_>,
    workers: usize,
    reuse: &BTreeMap<String, GenerationJob>,
    out: W,
) -> io::Result<BatchOutcome> {
    let sink = Mutex::new(OrderedSink {
        out,
        next: 0,
        pending: BTreeMap::new(),
        jobs: Vec::with_capacity(records.len()),
    });
    let cursor = AtomicUsize::new(0);
    let first_error: Mutex<Option<io::Error>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, records.len().max(1)) {
            scope.spawn(|| loop {
                let pos = cursor.fetch_add(1, Ordering::Relaxed);
                let Some(record) = records.get(pos) else { break };
                let started = Instant::now();
                let job = match reuse.get(&record.id) {
                    Some(done) if done.is_done() => done.clone(),
                    _ => run_one(record, pipeline),
                };
                log::debug!("record {}: {} in {:?}", record.id, job.status, started.elapsed());
                let mut sink = sink.lock().unwrap_or_else(PoisonError::into_inner);
                if let Err(e) = sink.push(pos, job) {
                    first_error.lock().unwrap_or_else(PoisonError::into_inner).get_or_insert(e);
                    cursor.store(records.len(), Ordering::Relaxed);
                    break;
                }
            });
        }
    });

    if let Some(e) = first_error.into_inner().unwrap_or_else(PoisonError::into_inner) {
        return Err(e);
    }
    let jobs = sink.into_inner().unwrap_or_else(PoisonError::into_inner).jobs;
    let failures = jobs
        .iter()
        .filter(|j| j.status == JobStatus::Failed)
        .map(|j| Failure {
            record_id: j.record_id.clone(),
            cause: j.failure.clone().unwrap_or_default(),
        })
        .collect();
    Ok(BatchOutcome { jobs, failures })
}

fn run_one(record: &MetaRecord, pipeline: &RagPipeline<'_>) -> GenerationJob {
    run_record(record, pipeline).unwrap_or_else(|e| {
        log::warn!("record {}: {e}", record.id);
        let mut job = GenerationJob::new(
            record.id.clone(),
            record.id.clone(),
            pipeline.template.id,
            pipeline.generator.model().to_string(),
            pipeline.params,
            pipeline.unit,
        );
        job.fail(e.to_string());
        job
    })
}

/// Writes a complete manifest: run header, jobs, summary.
pub fn write_manifest(
    path: &Path,
    header: ManifestLine,
    records: &[MetaRecord],
    pipeline: &RagPipeline<'_>,
    workers: usize,
    reuse: &BTreeMap<String, GenerationJob>,
) -> Result<BatchOutcome, IoError> {
    let started = Instant::now();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| IoError::io(path, e);
    serde_json::to_writer(&mut out, &header).map_err(|e| io_err(io::Error::other(e)))?;
    out.write_all(b"\n").map_err(io_err)?;
    let outcome = run_batch(records, pipeline, workers, reuse, &mut out).map_err(io_err)?;
    let summary = ManifestLine::Summary {
        done: outcome.jobs.iter().filter(|j| j.is_done()).count(),
        failed: outcome.failures.len(),
        failures: outcome.failures.clone(),
    };
    log::info!("generated {} records in {:?}", records.len(), started.elapsed());
    serde_json::to_writer(&mut out, &summary).map_err(|e| io_err(io::Error::other(e)))?;
    out.write_all(b"\n").map_err(io_err)?;
    out.flush().map_err(io_err)?;
    out.get_ref().sync_all().map_err(io_err)?;
    Ok(outcome)
}

/// Configuration and jobs of a manifest.
pub fn read_manifest(path: &Path) -> Result<(Option<PipelineConfig>, Vec<GenerationJob>), IoError> {
    let mut config = None;
    let mut jobs = Vec::new();
    for line in read_jsonl::<ManifestLine>(path)? {
        match line {
            ManifestLine::Run { config: c, .. } => config = Some(*c),
            ManifestLine::Job { job, .. } => jobs.push(*job),
            ManifestLine::Summary { .. } => {}
        }
    }
    Ok((config, jobs))
}
