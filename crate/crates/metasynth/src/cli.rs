//! The `metasynth` command line.
//!
//! Exit codes: 0 success, 1 internal error, 2 bad input (flags, config,
//! unreadable or invalid files, corrupt ballot log), 3 missing or stale
//! upstream artifact or incomplete evaluation, 4 failed records during
//! embedding or generation, 5 listen address in use.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use metasynth_core::generation::RagPipeline;
use metasynth_core::metrics::BleuConfig;
use metasynth_core::{
    build_report, chunk_record, compute_chunked_stats, compute_stats, create_tasks, split_corpus, verify_chunkset,
    Chunk, ChunkSet, Corpus, EvaluationError, GenerationJob, MeasureUnit, TaskPool,
};
use serde::Serialize;

use crate::config::{ConfigError, Overrides, PipelineConfig, ENV_EXPORT_SALT};
use crate::corpus_io::{load_chunks, load_corpus, save_chunks, save_corpus, write_json, CorpusFormat, IoError};
use crate::http::ThreadSleep;
use crate::index_io::{load_index, persist, sha256_hex, IndexFileError};
use crate::report::{markdown_table, report_document};
use crate::runner::{
    build_index, make_embedder, make_generator, read_manifest, stale_entries, write_manifest, BuildIndexError,
    ManifestLine,
};
use crate::server::{self, AppState, Reporter, ServerOptions};
use crate::store::{BallotStore, StoreError};

pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_UPSTREAM: u8 = 3;
pub const EXIT_ENDPOINT: u8 = 4;
pub const EXIT_PORT: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "metasynth", version, about = "Retrieval-augmented meta-analysis abstract synthesis")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "METASYNTH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus and write corpus.jsonl, stats.json and optional splits.
    Ingest(IngestArgs),
    /// Split every record's support abstracts into overlapping chunks.
    Chunk(ChunkArgs),
    /// Embed all chunks into a vector index.
    Index(IndexArgs),
    /// Generate one abstract per record and write the run manifest.
    Generate(GenerateArgs),
    /// Serve the evaluation API.
    Serve(ServeArgs),
    /// Write the evaluation report for one model.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ChunkFlags {
    /// Maximum chunk length in units.
    #[arg(long)]
    pub cap: Option<usize>,
    /// Units shared by consecutive chunks.
    #[arg(long)]
    pub overlap: Option<usize>,
    /// Length unit: whitespace_token or character.
    #[arg(long, value_parser = parse_unit)]
    pub unit: Option<MeasureUnit>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub format: Option<CorpusFormat>,
    /// Separator between support abstracts in CSV input.
    #[arg(long)]
    pub sep: Option<String>,
    /// Train, validation and test sizes, e.g. 400,175,50.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<[usize; 3]>,
    /// Shuffle seed for --split.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub chunking: ChunkFlags,
}

#[derive(Debug, Args)]
pub struct ChunkArgs {
    #[command(flatten)]
    pub chunking: ChunkFlags,
}

#[derive(Debug, Args)]
pub struct EmbeddingFlags {
    /// Embedding endpoint; the offline hashing embedder when unset.
    #[arg(long)]
    pub embedding_url: Option<String>,
    #[arg(long)]
    pub embedding_model: Option<String>,
    /// Dimension of the hashing embedder.
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[command(flatten)]
    pub embedding: EmbeddingFlags,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub embedding: EmbeddingFlags,
    /// Chat-completions endpoint; the offline canned generator when unset.
    #[arg(long)]
    pub generation_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// prompt1, prompt2 or custom.
    #[arg(long)]
    pub prompt: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    /// Sampling seed passed to the endpoint.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Prompt length limit in units.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Keep finished jobs from an existing manifest and rerun the rest.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Reject ballot submissions.
    #[arg(long)]
    pub readonly: bool,
    /// Model tag for tasks created from the manifest.
    #[arg(long)]
    pub model: Option<String>,
    /// Shared bearer token required on API calls.
    #[arg(long, env = "METASYNTH_SERVE_TOKEN", hide_env_values = true)]
    pub token: Option<String>,
    /// Directory of static console assets served at /.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    #[arg(long)]
    pub required_ballots: Option<usize>,
    /// Three-way split resolution: middle or worst_case.
    #[arg(long)]
    pub tie_rule: Option<String>,
    #[command(flatten)]
    pub embedding: EmbeddingFlags,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub model: Option<String>,
    #[command(flatten)]
    pub embedding: EmbeddingFlags,
}

fn parse_unit(s: &str) -> Result<MeasureUnit, String> {
    s.parse().map_err(|e: metasynth_core::ChunkError| e.to_string())
}

fn parse_split(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| "expected three comma-separated sizes".to_string())
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl fmt::Display) -> Self {
        CliError {
            code,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::new(EXIT_INPUT, format!("configuration: {e}"))
    }
}

/// Reading an input the user named: every failure is bad input.
fn input_error(e: IoError) -> CliError {
    CliError::new(EXIT_INPUT, e)
}

/// Reading an artifact of an earlier stage.
fn artifact_error(e: IoError, stage: &str) -> CliError {
    if e.is_not_found() {
        CliError::new(EXIT_UPSTREAM, format!("{e}; run `metasynth {stage}` first"))
    } else {
        CliError::new(EXIT_INPUT, e)
    }
}

fn write_error(e: IoError) -> CliError {
    CliError::new(EXIT_INTERNAL, e)
}

fn store_error(e: StoreError) -> CliError {
    match e {
        StoreError::Missing(_) => CliError::new(EXIT_UPSTREAM, format!("{e}; run `metasynth serve` first")),
        StoreError::Io(ref io) if !io.is_not_found() => CliError::new(EXIT_INTERNAL, e),
        other => CliError::new(EXIT_INPUT, other),
    }
}

fn embedding_overrides(o: &mut Overrides, f: &EmbeddingFlags) {
    o.set_opt("embedding.url", f.embedding_url.clone())
        .set_opt("embedding.model", f.embedding_model.clone())
        .set_opt("embedding.dim", f.dim.map(|v| v as i64));
}

fn chunk_overrides(o: &mut Overrides, f: &ChunkFlags) {
    o.set_opt("chunking.cap", f.cap.map(|v| v as i64))
        .set_opt("chunking.overlap", f.overlap.map(|v| v as i64))
        .set_opt("chunking.unit", f.unit.map(|u| u.as_str()));
}

fn flag_overrides(cli: &Cli) -> Overrides {
    let mut o = Overrides::default();
    o.set_opt("out_dir", cli.out.as_ref().map(|p| p.display().to_string()));
    match &cli.command {
        Command::Ingest(a) => {
            o.set("corpus.path", a.input.display().to_string())
                .set_opt("corpus.format", a.format.map(|f| f.as_str()))
                .set_opt("corpus.separator", a.sep.clone());
            if let Some([train, val, test]) = a.split {
                o.set("split.train_count", train as i64)
                    .set("split.val_count", val as i64)
                    .set("split.test_count", test as i64)
                    .set("split.shuffle_seed", a.seed.unwrap_or(0) as i64);
            }
            chunk_overrides(&mut o, &a.chunking);
        }
        Command::Chunk(a) => chunk_overrides(&mut o, &a.chunking),
        Command::Index(a) => {
            embedding_overrides(&mut o, &a.embedding);
            o.set_opt("embedding.batch_size", a.batch_size.map(|v| v as i64));
        }
        Command::Generate(a) => {
            embedding_overrides(&mut o, &a.embedding);
            o.set_opt("generation.url", a.generation_url.clone())
                .set_opt("generation.model", a.model.clone())
                .set_opt("generation.template", a.prompt.clone())
                .set_opt("generation.sampling.temperature", a.temperature)
                .set_opt("generation.sampling.max_output_units", a.max_tokens.map(|v| v as i64))
                .set_opt("generation.sampling.seed", a.seed.map(|v| v as i64))
                .set_opt("generation.top_k", a.top_k.map(|v| v as i64))
                .set_opt("generation.context_budget", a.budget.map(|v| v as i64))
                .set_opt("generation.workers", a.workers.map(|v| v as i64));
        }
        Command::Serve(a) => {
            embedding_overrides(&mut o, &a.embedding);
            o.set_opt("evaluation.required_ballots", a.required_ballots.map(|v| v as i64))
                .set_opt("evaluation.tie_rule", a.tie_rule.clone());
        }
        Command::Report(a) => embedding_overrides(&mut o, &a.embedding),
    }
    o
}

/// Runs a parsed command line. `env` stands in for the process environment.
pub fn run(cli: &Cli, env: &dyn Fn(&str) -> Option<String>) -> Result<(), CliError> {
    let cfg = PipelineConfig::resolve(cli.config.as_deref(), &Overrides::from_env(env), &flag_overrides(cli))?;
    match &cli.command {
        Command::Ingest(_) => ingest(&cfg),
        Command::Chunk(_) => chunk(&cfg),
        Command::Index(_) => index(&cfg, env),
        Command::Generate(a) => generate(&cfg, a, env),
        Command::Serve(a) => serve(&cfg, a, env),
        Command::Report(a) => report(&cfg, a, env),
    }
}

/// Parses `args`, runs, and reports errors on stderr. Returns the exit code.
pub fn main_with<I, T>(args: I, env: &dyn Fn(&str) -> Option<String>) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    match run(&cli, env) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn say(line: impl fmt::Display) {
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn ensure_out_dir(cfg: &PipelineConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| write_error(IoError::io(&cfg.out_dir, e)))
}

#[derive(Serialize)]
struct StatsFile {
    dataset: metasynth_core::DatasetStats,
    chunked: metasynth_core::ChunkedStats,
}

fn ingest(cfg: &PipelineConfig) -> Result<(), CliError> {
    let input = cfg
        .corpus
        .path
        .as_deref()
        .ok_or_else(|| CliError::new(EXIT_INPUT, "no corpus path given"))?;
    let corpus = load_corpus(input, cfg.corpus.format, &cfg.corpus.separator).map_err(input_error)?;
    if corpus.is_empty() {
        return Err(CliError::new(EXIT_INPUT, format!("{}: no records", input.display())));
    }
    let stats = StatsFile {
        dataset: compute_stats(&corpus, cfg.chunking.unit),
        chunked: compute_chunked_stats(&corpus, &cfg.chunking).map_err(|e| CliError::new(EXIT_INPUT, e))?,
    };
    ensure_out_dir(cfg)?;
    save_corpus(&cfg.corpus_path(), &corpus).map_err(write_error)?;
    write_json(&cfg.stats_path(), &stats).map_err(write_error)?;
    if let Some(spec) = &cfg.split {
        let splits = split_corpus(&corpus, spec).map_err(|e| CliError::new(EXIT_INPUT, e))?;
        let dir = cfg.out_dir.join("splits");
        fs::create_dir_all(&dir).map_err(|e| write_error(IoError::io(&dir, e)))?;
        for (name, part) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
            save_corpus(&dir.join(format!("{name}.jsonl")), part).map_err(write_error)?;
        }
        say(format!(
            "split {} / {} / {} records into {}",
            splits.train.len(),
            splits.val.len(),
            splits.test.len(),
            dir.display()
        ));
    }
    say(format!(
        "ingested {} records ({} supports) into {}",
        corpus.len(),
        corpus.total_supports(),
        cfg.corpus_path().display()
    ));
    Ok(())
}

fn load_ingested(cfg: &PipelineConfig) -> Result<Corpus, CliError> {
    load_corpus(&cfg.corpus_path(), CorpusFormat::Jsonl, &cfg.corpus.separator).map_err(|e| artifact_error(e, "ingest"))
}

fn chunk(cfg: &PipelineConfig) -> Result<(), CliError> {
    let corpus = load_ingested(cfg)?;
    let mut sets = Vec::with_capacity(corpus.len());
    for r in corpus.records() {
        let cs = chunk_record(r, &cfg.chunking).map_err(|e| CliError::new(EXIT_INPUT, format!("record {}: {e}", r.id)))?;
        let violations = verify_chunkset(&cs, &r.supports);
        if let Some(v) = violations.first() {
            return Err(CliError::new(
                EXIT_INTERNAL,
                format!("record {}: chunk set failed verification: {v:?}", r.id),
            ));
        }
        sets.push(cs);
    }
    save_chunks(&cfg.chunks_path(), &sets).map_err(write_error)?;
    let total: usize = sets.iter().map(ChunkSet::k).sum();
    say(format!(
        "wrote {total} chunks for {} records to {}",
        sets.len(),
        cfg.chunks_path().display()
    ));
    Ok(())
}

fn index(cfg: &PipelineConfig, env: &dyn Fn(&str) -> Option<String>) -> Result<(), CliError> {
    let sets = load_chunks(&cfg.chunks_path()).map_err(|e| artifact_error(e, "chunk"))?;
    let unit = sets.first().map_or(cfg.chunking.unit, |s| s.config().unit);
    let embedder = make_embedder(cfg, env);
    let index = build_index(&sets, embedder.as_ref(), cfg.embedding.batch_size, unit).map_err(|e| match e {
        BuildIndexError::Embed(_) => CliError::new(EXIT_ENDPOINT, e),
        BuildIndexError::NoChunks => CliError::new(EXIT_UPSTREAM, e),
        BuildIndexError::Index(_) => CliError::new(EXIT_INTERNAL, e),
    })?;
    persist(&index, &cfg.index_path()).map_err(write_error)?;
    say(format!(
        "indexed {} chunks (dim {}) into {}",
        index.len(),
        index.dim(),
        cfg.index_path().display()
    ));
    Ok(())
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    fs::read(path)
        .map(|b| sha256_hex(&b))
        .map_err(|e| input_error(IoError::io(path, e)))
}

/// Finished jobs of an earlier run that used the same template, model and
/// sampling settings.
fn reusable_jobs(cfg: &PipelineConfig) -> Result<BTreeMap<String, GenerationJob>, CliError> {
    let path = cfg.manifest_path();
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let (_, jobs) = read_manifest(&path).map_err(input_error)?;
    Ok(jobs
        .into_iter()
        .filter(|j| {
            j.is_done()
                && j.template == cfg.generation.template
                && j.model == cfg.generation.model
                && j.params == cfg.generation.sampling
        })
        .map(|j| (j.record_id.clone(), j))
        .collect())
}

fn generate(cfg: &PipelineConfig, args: &GenerateArgs, env: &dyn Fn(&str) -> Option<String>) -> Result<(), CliError> {
    let corpus = load_ingested(cfg)?;
    let sets = load_chunks(&cfg.chunks_path()).map_err(|e| artifact_error(e, "chunk"))?;
    let index = load_index(&cfg.index_path()).map_err(|e| match e {
        IndexFileError::Io(io) => artifact_error(io, "index"),
        other => CliError::new(EXIT_INPUT, other),
    })?;
    let chunks: BTreeMap<String, Chunk> = sets
        .into_iter()
        .flat_map(|s| s.chunks)
        .map(|c| (c.id.clone(), c))
        .collect();
    let stale = stale_entries(&index, &chunks);
    if !stale.is_empty() {
        return Err(CliError::new(
            EXIT_UPSTREAM,
            format!(
                "index is stale for {} chunks (first: {}); run `metasynth index` again",
                stale.len(),
                stale[0]
            ),
        ));
    }

    let template = cfg.template();
    let embedder = make_embedder(cfg, env);
    let generator = make_generator(cfg, env);
    let g = &cfg.generation;
    let pipeline = RagPipeline {
        params: g.sampling,
        top_k: g.top_k,
        context_budget: g.context_budget,
        query: g.query.as_deref(),
        retry: g.retry,
        sleeper: &ThreadSleep,
        ..RagPipeline::new(&template, embedder.as_ref(), &index, &chunks, generator.as_ref())
    };
    let reuse = if args.resume { reusable_jobs(cfg)? } else { BTreeMap::new() };
    let header = ManifestLine::Run {
        config: Box::new(cfg.clone()),
        template_text: template.text.clone(),
        query: pipeline.query_text().to_string(),
        corpus_sha256: sha256_file(&cfg.corpus_path())?,
        index_sha256: sha256_file(&cfg.index_path())?,
        records: corpus.len(),
    };
    let outcome = write_manifest(
        &cfg.manifest_path(),
        header,
        corpus.records(),
        &pipeline,
        g.workers,
        &reuse,
    )
    .map_err(write_error)?;
    let done = outcome.jobs.iter().filter(|j| j.is_done()).count();
    say(format!(
        "generated {done} of {} records into {}",
        outcome.jobs.len(),
        cfg.manifest_path().display()
    ));
    if outcome.failures.is_empty() {
        return Ok(());
    }
    let mut message = format!("{} records failed:", outcome.failures.len());
    for f in &outcome.failures {
        message.push_str(&format!("\n  {}: {}", f.record_id, f.cause));
    }
    Err(CliError::new(EXIT_ENDPOINT, message))
}

fn reporter(cfg: &PipelineConfig, env: &dyn Fn(&str) -> Option<String>) -> Reporter {
    let embedder = make_embedder(cfg, env);
    let embedder: Arc<dyn metasynth_core::Embedder> = Arc::from(embedder);
    Arc::new(move |pool: &TaskPool, tag: &str| build_report(pool, tag, embedder.as_ref(), &BleuConfig::default()))
}

fn open_or_create_store(cfg: &PipelineConfig, tag: Option<&str>) -> Result<BallotStore, CliError> {
    let dir = cfg.store_dir();
    if BallotStore::exists(&dir) {
        return BallotStore::open(&dir).map_err(store_error);
    }
    let manifest = cfg.manifest_path();
    let (run_cfg, jobs) = read_manifest(&manifest).map_err(|e| artifact_error(e, "generate"))?;
    let corpus = load_ingested(cfg)?;
    let tag = tag
        .map(str::to_string)
        .or_else(|| run_cfg.map(|c| c.generation.model))
        .unwrap_or_else(|| cfg.generation.model.clone());
    let (tasks, skipped) = create_tasks(&jobs, &corpus, &tag, cfg.evaluation.required_ballots)
        .map_err(|e| CliError::new(EXIT_INPUT, e))?;
    for s in &skipped {
        log::warn!("job {} skipped: {}", s.job_id, s.reason);
    }
    if tasks.is_empty() {
        return Err(CliError::new(EXIT_UPSTREAM, format!("{}: no finished jobs", manifest.display())));
    }
    BallotStore::create(&dir, tasks, cfg.evaluation.tie_rule, cfg.evaluation.evaluators.clone()).map_err(store_error)
}

fn serve(cfg: &PipelineConfig, args: &ServeArgs, env: &dyn Fn(&str) -> Option<String>) -> Result<(), CliError> {
    let store = open_or_create_store(cfg, args.model.as_deref())?;
    let progress = store.pool().progress();
    let listener = std::net::TcpListener::bind((args.host.as_str(), args.port)).map_err(|e| {
        let code = if e.kind() == io::ErrorKind::AddrInUse { EXIT_PORT } else { EXIT_INPUT };
        CliError::new(code, format!("cannot listen on {}:{}: {e}", args.host, args.port))
    })?;
    listener
        .set_nonblocking(true)
        .map_err(|e| CliError::new(EXIT_INTERNAL, e))?;
    let addr = listener.local_addr().map_err(|e| CliError::new(EXIT_INTERNAL, e))?;
    let options = ServerOptions {
        readonly: args.readonly,
        token: args.token.clone().filter(|t| !t.is_empty()),
        static_dir: args.static_dir.clone(),
    };
    let app = AppState::new(store, reporter(cfg, env), options);

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::new(EXIT_INTERNAL, e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener).map_err(|e| CliError::new(EXIT_INTERNAL, e))?;
        say(format!(
            "listening on http://{addr} ({} open, {} complete, {} ballots)",
            progress.open, progress.complete, progress.ballots_total
        ));
        server::serve(listener, app, shutdown_signal())
            .await
            .map_err(|e| CliError::new(EXIT_INTERNAL, e))
    })?;
    say("ballot log flushed; bye");
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

fn report(cfg: &PipelineConfig, args: &ReportArgs, env: &dyn Fn(&str) -> Option<String>) -> Result<(), CliError> {
    let store = open_or_create_store(cfg, args.model.as_deref())?;
    let pool = store.pool();
    let tag = match &args.model {
        Some(t) => t.clone(),
        None => pool.tasks().first().map_or_else(|| cfg.generation.model.clone(), |t| t.model_tag.clone()),
    };
    let report = reporter(cfg, env)(pool, &tag).map_err(|e| match e {
        EvaluationError::IncompleteTasks { .. } => CliError::new(EXIT_UPSTREAM, format!("incomplete tasks: {e}")),
        EvaluationError::NoTasks(_) => CliError::new(EXIT_UPSTREAM, e),
        other => CliError::new(EXIT_INTERNAL, other),
    })?;
    let salt = env(ENV_EXPORT_SALT).filter(|s| !s.is_empty());
    if salt.is_none() {
        log::warn!("{ENV_EXPORT_SALT} is not set; ballots are left out of the export");
    }
    let table = markdown_table(std::slice::from_ref(&report));
    let doc = report_document(pool, report, salt.as_deref());
    let json_path = cfg.out_dir.join(format!("report-{tag}.json"));
    let md_path = cfg.out_dir.join(format!("report-{tag}.md"));
    write_json(&json_path, &doc).map_err(write_error)?;
    crate::corpus_io::write_atomic(&md_path, |w| w.write_all(table.as_bytes())).map_err(write_error)?;
    say(table.trim_end());
    say(format!("wrote {} and {}", json_path.display(), md_path.display()));
    Ok(())
}
