mod common;

use std::collections::BTreeSet;
use std::fs;

use axum::http::StatusCode;
use axum::routing::post;
use axum::Router;
use common::{code, fixture, ok, prepare, run, stderr, MockServer};
use metasynth::corpus_io::{load_chunks, load_corpus, CorpusFormat};
use metasynth::runner::{read_manifest, ManifestLine};
use metasynth_core::{measure, verify_chunkset, JobStatus};

fn mini() -> String {
    fixture("mad_mini.jsonl").display().to_string()
}

#[test]
fn ingest_writes_corpus_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["ingest", &mini()]);
    let corpus = load_corpus(&out.join("corpus.jsonl"), CorpusFormat::Jsonl, "<SEP>").unwrap();
    assert_eq!(corpus.len(), 12);
    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["dataset"]["total_records"], 12);
    assert_eq!(stats["dataset"]["total_supports"], corpus.total_supports());
    assert_eq!(stats["chunked"]["total_chunks"], 15);
    assert!(stats["chunked"]["chunk_length"]["max"].as_u64().unwrap() <= 2000);
    assert_eq!(stats["dataset"]["support_count_histogram"]["5"], 5);
}

#[test]
fn ingest_split_writes_disjoint_parts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["ingest", &mini(), "--split", "6,4,2", "--seed", "9"]);
    let mut seen = BTreeSet::new();
    for (name, n) in [("train", 6), ("val", 4), ("test", 2)] {
        let part = load_corpus(&out.join(format!("splits/{name}.jsonl")), CorpusFormat::Jsonl, "<SEP>").unwrap();
        assert_eq!(part.len(), n);
        for r in part.records() {
            assert!(seen.insert(r.id.clone()));
        }
    }
    let o = run(out, &["ingest", &mini(), "--split", "10,4,2"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["ingest", "no/such/corpus.jsonl"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no/such/corpus.jsonl"), "{}", stderr(&o));
}

#[test]
fn csv_format_on_jsonl_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["ingest", "--format", "csv", &mini()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("mad_mini.jsonl"), "{}", stderr(&o));
}

#[test]
fn csv_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("two.csv");
    fs::write(
        &csv,
        "meta_abstract,support_abstracts\n\"pooled finding one\",\"trial a<SEP>trial b<SEP>trial c\"\n\"pooled two\",\"only trial\"\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(&out, &["ingest", "--format", "csv", csv.to_str().unwrap()]);
    let corpus = load_corpus(&out.join("corpus.jsonl"), CorpusFormat::Jsonl, "<SEP>").unwrap();
    assert_eq!(corpus.records()[0].supports.len(), 3);
    assert_eq!(corpus.records()[1].supports[0].text, "only trial");
}

#[test]
fn invalid_flags_and_config_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(code(&run(out, &["ingest", &mini(), "--cap", "100", "--overlap", "100"])), 2);
    assert_eq!(code(&run(out, &["ingest", &mini(), "--unit", "syllable"])), 2);
    assert_eq!(code(&run(out, &["frobnicate"])), 2);
    let cfg = out.join("bad.toml");
    fs::write(&cfg, "[chunking]\ncapp = 3\n").unwrap();
    let o = run(out, &["--config", cfg.to_str().unwrap(), "ingest", &mini()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("capp"), "{}", stderr(&o));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = out.join("c.toml");
    fs::write(&cfg, "[chunking]\ncap = 300\noverlap = 50\n").unwrap();
    let c = cfg.to_str().unwrap();
    ok(out, &["--config", c, "ingest", &mini()]);
    ok(out, &["--config", c, "chunk", "--overlap", "20"]);
    let sets = load_chunks(&out.join("chunks.jsonl")).unwrap();
    assert!(sets.iter().all(|s| s.config().cap == 300 && s.config().overlap == 20));
}

#[test]
fn chunk_output_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["ingest", &mini()]);
    ok(out, &["chunk", "--cap", "2000", "--overlap", "200"]);
    let corpus = load_corpus(&out.join("corpus.jsonl"), CorpusFormat::Jsonl, "<SEP>").unwrap();
    let sets = load_chunks(&out.join("chunks.jsonl")).unwrap();
    assert_eq!(sets.len(), 12);
    for (cs, r) in sets.iter().zip(corpus.records()) {
        assert_eq!(verify_chunkset(cs, &r.supports), vec![]);
    }
    let ks: Vec<usize> = sets.iter().map(|s| s.k()).collect();
    assert_eq!(ks, [1, 1, 1, 1, 1, 1, 2, 1, 1, 1, 3, 1]);
}

#[test]
fn stages_need_their_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    for stage in ["chunk", "index", "generate", "report"] {
        let o = run(out, &[stage]);
        assert_eq!(code(&o), 3, "{stage}: {}", stderr(&o));
    }
    ok(out, &["ingest", &mini()]);
    assert_eq!(code(&run(out, &["index"])), 3);
    ok(out, &["chunk"]);
    let o = run(out, &["generate"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("index.jsonl"), "{}", stderr(&o));
}

#[test]
fn generate_writes_full_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["ingest", &mini()]);
    ok(out, &["chunk"]);
    ok(out, &["index"]);
    ok(out, &["generate", "--temperature", "0.7", "--prompt", "prompt1"]);
    let lines: Vec<ManifestLine> = fs::read_to_string(out.join("manifest.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let ManifestLine::Run { config, template_text, .. } = &lines[0] else {
        panic!("no run header")
    };
    assert_eq!(config.generation.sampling.temperature, 0.7);
    assert!(template_text.contains("{context}"));
    assert!(matches!(lines.last(), Some(ManifestLine::Summary { done: 12, failed: 0, .. })));
    let (_, jobs) = read_manifest(&out.join("manifest.jsonl")).unwrap();
    assert_eq!(jobs.len(), 12);
    for j in &jobs {
        assert_eq!(j.status, JobStatus::Done);
        assert!(!j.retrieved.is_empty());
        assert!(j.retrieved.iter().all(|h| h.chunk_id.starts_with(&j.record_id)));
        assert!(j.prompt_units <= 4096);
        assert_eq!(measure(&j.assembled_prompt, j.unit), j.prompt_units);
    }
}

#[test]
fn stages_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    prepare(out);
    let artifacts = ["corpus.jsonl", "stats.json", "chunks.jsonl", "index.jsonl", "manifest.jsonl"];
    let before: Vec<Vec<u8>> = artifacts.iter().map(|a| fs::read(out.join(a)).unwrap()).collect();
    prepare(out);
    for (a, b) in artifacts.iter().zip(before) {
        assert_eq!(fs::read(out.join(a)).unwrap(), b, "{a} changed");
    }
}

#[test]
fn resume_keeps_finished_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    prepare(out);
    let before = fs::read(out.join("manifest.jsonl")).unwrap();
    ok(out, &["generate", "--resume"]);
    assert_eq!(fs::read(out.join("manifest.jsonl")).unwrap(), before);
}

#[test]
fn stale_index_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    prepare(out);
    ok(out, &["chunk", "--cap", "500", "--overlap", "50"]);
    let o = run(out, &["generate"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("stale"), "{}", stderr(&o));
}

#[test]
fn endpoint_failures_exit_4_with_record_list() {
    let app = Router::new().route(
        "/v1/chat/completions",
        post(|| async { (StatusCode::INTERNAL_SERVER_ERROR, "boom") }),
    );
    let srv = MockServer::start(app);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["ingest", &mini()]);
    ok(out, &["chunk"]);
    ok(out, &["index"]);
    let cfg = out.join("fast-retry.toml");
    fs::write(&cfg, "[generation.retry]\nmax_retries = 1\nbase_delay_ms = 1\nmax_delay_ms = 1\n").unwrap();
    let url = format!("{}/v1", srv.base);
    let o = run(out, &["--config", cfg.to_str().unwrap(), "generate", "--generation-url", &url]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("12 records failed"), "{err}");
    for i in 1..=12 {
        assert!(err.contains(&format!("mad-{i:03}: ")), "{err}");
    }
    let (_, jobs) = read_manifest(&out.join("manifest.jsonl")).unwrap();
    assert!(jobs.iter().all(|j| j.status == JobStatus::Failed && j.attempts == 2));
}

#[test]
fn embedding_endpoint_failure_exits_4() {
    let app = Router::new().route("/v1/embeddings", post(|| async { (StatusCode::BAD_REQUEST, "nope") }));
    let srv = MockServer::start(app);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["ingest", &mini()]);
    ok(out, &["chunk"]);
    let o = run(out, &["index", "--embedding-url", &format!("{}/v1", srv.base)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn report_before_evaluation_is_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    prepare(out);
    let o = run(out, &["report", "--model", "demo"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("incomplete tasks"), "{}", stderr(&o));
    let o = run(out, &["report", "--model", "other"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn corrupt_ballot_log_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    prepare(out);
    assert_eq!(code(&run(out, &["report"])), 3);
    fs::write(out.join("evaluation/ballots.jsonl"), "{\"task_id\": 3}\n").unwrap();
    let o = run(out, &["report"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("corrupt ballot log"), "{}", stderr(&o));
    let o = run(out, &["serve", "--port", "0"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn stdout_carries_no_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["ingest", "missing.jsonl"]);
    assert!(o.stdout.is_empty());
    assert!(!o.stderr.is_empty());
}
