mod common;

use std::collections::BTreeSet;
use std::fs;
use std::sync::Arc;

use common::{agent, ballot, code, command, get, ok, post, prepare, run, stderr, Served};
use metasynth::report::ReportDocument;
use metasynth::server::{self, AppState, ServerOptions, TaskPayload};
use metasynth::store::BallotStore;
use metasynth_core::{EvaluationTask, ModelReport, Progress, TaskState, TieRule};
use serde_json::json;

fn next(s: &Served, evaluator: &str) -> Option<TaskPayload> {
    let (status, body) = get(&s.url(&format!("/api/tasks/next?evaluator={evaluator}")));
    match status {
        200 => Some(serde_json::from_str(&body).unwrap()),
        204 => None,
        other => panic!("next task: {other} {body}"),
    }
}

fn progress(s: &Served) -> Progress {
    serde_json::from_str(&get(&s.url("/api/progress")).1).unwrap()
}

/// Three evaluators judge every task; task i gets labels from `labels(i)`.
fn judge_all(s: &Served, labels: impl Fn(usize) -> [&'static str; 3]) {
    for (e, who) in ["ann", "bob", "cyd"].into_iter().enumerate() {
        while let Some(t) = next(s, who) {
            let i: usize = t.id.trim_start_matches("mad-").parse().unwrap();
            assert_eq!(ballot(&s.base, &t.id, who, labels(i)[e]), 201);
        }
    }
}

fn labels(i: usize) -> [&'static str; 3] {
    match i % 4 {
        0 => ["IRL", "IRL", "REL"],
        1 => ["REL", "SWR", "IRL"],
        _ => ["REL", "REL", "SWR"],
    }
}

#[test]
fn api_contract() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let s = Served::start(dir.path(), &[]);

    assert_eq!(get(&s.url("/api/tasks/next")).0, 400);
    let t = next(&s, "ann").unwrap();
    assert_eq!(t.id, "mad-001");
    assert_eq!((t.position.done, t.position.total), (0, 12));
    assert!(t.ground_truth_text.starts_with("This meta-analysis pooled 3 studies"));
    assert_eq!(t.support_preview.len(), 3);

    let url = s.url("/api/ballots");
    assert_eq!(ballot(&s.base, "mad-001", "ann", "REL"), 201);
    assert_eq!(ballot(&s.base, "mad-001", "ann", "IRL"), 409);
    assert_eq!(ballot(&s.base, "mad-404", "ann", "REL"), 404);
    assert_eq!(ballot(&s.base, "mad-002", "ann", "GOOD"), 422);
    assert!((400..500).contains(&post(&url, json!({ "task_id": "mad-002" })).0));

    // mad-001 now has a ballot, so bob gets the first untouched task.
    assert_eq!(next(&s, "ann").unwrap().position.done, 1);
    assert_eq!(next(&s, "bob").unwrap().id, "mad-002");

    assert_eq!(ballot(&s.base, "mad-001", "bob", "REL"), 201);
    let (status, body) = post(&url, json!({ "task_id": "mad-001", "evaluator": "cyd", "label": "SWR" }));
    assert_eq!(status, 201);
    assert_eq!(body, r#"{"task_id":"mad-001","state":"complete"}"#);
    assert_eq!(ballot(&s.base, "mad-001", "dee", "REL"), 409);

    assert_eq!(
        progress(&s),
        Progress {
            open: 11,
            complete: 1,
            ballots_total: 3
        }
    );
    assert_eq!(get(&s.url("/api/reports/demo")).0, 409);
    assert_eq!(get(&s.url("/api/reports/unknown-model")).0, 404);
    assert_eq!(get(&s.url("/nothing/here")).0, 404);
}

#[test]
fn evaluator_never_sees_a_task_twice() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let s = Served::start(dir.path(), &[]);
    let mut seen = BTreeSet::new();
    while let Some(t) = next(&s, "ann") {
        assert!(seen.insert(t.id.clone()), "{} served twice", t.id);
        assert_eq!(ballot(&s.base, &t.id, "ann", "REL"), 201);
    }
    assert_eq!(seen.len(), 12);
    assert_eq!(get(&s.url("/api/tasks/next?evaluator=ann")).0, 204);
    // Every task has one ballot now, so order falls back to creation.
    assert_eq!(next(&s, "bob").unwrap().id, "mad-001");
}

#[test]
fn restart_keeps_aggregates_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    prepare(out);

    let s = Served::start(out, &[]);
    for who in ["ann", "bob", "cyd"] {
        assert_eq!(ballot(&s.base, "mad-004", who, "IRL"), 201);
    }
    let before = progress(&s);
    assert_eq!(s.stop(), 0);

    let s = Served::start(out, &[]);
    assert_eq!(progress(&s), before);
    assert_eq!(ballot(&s.base, "mad-004", "dee", "REL"), 409);
    judge_all(&s, labels);
    let (status, body) = get(&s.url("/api/reports/demo"));
    assert_eq!(status, 200, "{body}");
    let live: ModelReport = serde_json::from_str(&body).unwrap();
    assert_eq!(s.stop(), 0);

    let s = Served::start(out, &[]);
    let again: ModelReport = serde_json::from_str(&get(&s.url("/api/reports/demo")).1).unwrap();
    assert_eq!(again, live);
    drop(s);

    // mad-004, -008, -012 are IRL; 001, 005, 009 split three ways (SWR);
    // the rest REL.
    assert_eq!(live.tasks, 12);
    assert!((live.rel_pct - 50.0).abs() < 1e-9);
    assert!((live.swr_pct - 25.0).abs() < 1e-9);
    assert!((live.irl_pct - 25.0).abs() < 1e-9);
    assert_eq!(live.relevant.unwrap().tasks, 6);
    assert_eq!(live.irrelevant.unwrap().tasks, 3);

    let o = command(out)
        .env("METASYNTH_EXPORT_SALT", "pepper")
        .arg("report")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc: ReportDocument = serde_json::from_str(&fs::read_to_string(out.join("report-demo.json")).unwrap()).unwrap();
    assert_eq!(doc.report, live);
    let ballots = doc.ballots.unwrap();
    assert_eq!(ballots.len(), 36);
    let raw = fs::read_to_string(out.join("report-demo.json")).unwrap();
    for who in ["ann", "bob", "cyd"] {
        assert!(!raw.contains(&format!("\"{who}\"")));
    }
    assert_eq!(ballots.iter().map(|b| &b.evaluator).collect::<BTreeSet<_>>().len(), 3);
    let md = fs::read_to_string(out.join("report-demo.md")).unwrap();
    assert!(md.lines().nth(2).unwrap().starts_with("| demo | 50.0 | 25.0 | 25.0 |"), "{md}");

    // Without a salt the export has no ballots at all.
    ok(out, &["report"]);
    let doc: ReportDocument = serde_json::from_str(&fs::read_to_string(out.join("report-demo.json")).unwrap()).unwrap();
    assert!(doc.ballots.is_none());
}

#[test]
fn occupied_port_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    let o = run(dir.path(), &["serve", "--port", &port]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    assert!(stderr(&o).contains(&port));
}

#[test]
fn readonly_rejects_ballots() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let s = Served::start(dir.path(), &["--readonly"]);
    assert!(next(&s, "ann").is_some());
    assert_eq!(ballot(&s.base, "mad-001", "ann", "REL"), 403);
    assert_eq!(progress(&s).ballots_total, 0);
}

#[test]
fn shared_token_guards_the_api() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let s = Served::start(dir.path(), &["--token", "hunter2"]);
    assert_eq!(get(&s.url("/api/progress")).0, 401);
    let r = agent()
        .get(&s.url("/api/progress"))
        .header("Authorization", "Bearer hunter2")
        .call()
        .unwrap();
    assert_eq!(r.status().as_u16(), 200);
}

#[test]
fn registered_evaluators_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    prepare(out);
    let cfg = out.join("eval.toml");
    fs::write(&cfg, "[evaluation]\nevaluators = [\"ann\", \"bob\", \"cyd\"]\n").unwrap();
    let s = Served::start(out, &["--config", cfg.to_str().unwrap()]);
    assert!(next(&s, "ann").is_some());
    assert_eq!(get(&s.url("/api/tasks/next?evaluator=mallory")).0, 403);
    assert_eq!(ballot(&s.base, "mad-001", "mallory", "REL"), 403);
}

#[test]
fn serves_static_console() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let assets = dir.path().join("console");
    fs::create_dir(&assets).unwrap();
    fs::write(assets.join("index.html"), "<h1>console</h1>").unwrap();
    let s = Served::start(dir.path(), &["--static-dir", assets.to_str().unwrap()]);
    let (status, body) = get(&s.url("/"));
    assert_eq!((status, body.as_str()), (200, "<h1>console</h1>"));
    assert_eq!(get(&s.url("/api/progress")).0, 200);
}

fn task(id: &str) -> EvaluationTask {
    EvaluationTask {
        id: id.into(),
        job_ref: id.into(),
        model_tag: "m".into(),
        generated_text: "generated".into(),
        ground_truth_text: "truth".into(),
        support_preview: vec![],
        required_ballots: 3,
        state: TaskState::Open,
    }
}

#[test]
fn concurrent_ballots_complete_a_task_once() {
    let dir = tempfile::tempdir().unwrap();
    let store = BallotStore::create(dir.path(), vec![task("t1"), task("t2")], TieRule::Middle, vec![]).unwrap();
    let reporter: server::Reporter = Arc::new(|_, _| unreachable!());
    let app = AppState::new(store, reporter, ServerOptions::default());
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let handle = rt.spawn(server::serve(listener, app, async {
        let _ = stopped.await;
    }));

    let codes: Vec<u16> = std::thread::scope(|scope| {
        let hs: Vec<_> = (0..24)
            .map(|i| {
                let base = &base;
                scope.spawn(move || ballot(base, "t1", &format!("e{i}"), "REL"))
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(codes.iter().filter(|&&c| c == 201).count(), 3);
    assert_eq!(codes.iter().filter(|&&c| c == 409).count(), 21);

    stop.send(()).unwrap();
    rt.block_on(handle).unwrap().unwrap();
    let log = fs::read_to_string(dir.path().join("ballots.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let reopened = BallotStore::open(dir.path()).unwrap();
    assert_eq!(reopened.pool().progress().complete, 1);
}
