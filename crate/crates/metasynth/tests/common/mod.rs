#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

use axum::Router;

pub const BIN: &str = env!("CARGO_BIN_EXE_metasynth");

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// The binary with a clean `METASYNTH_*` environment.
pub fn command(out: &Path) -> Command {
    let mut c = Command::new(BIN);
    for (k, _) in std::env::vars() {
        if k.starts_with("METASYNTH_") {
            c.env_remove(k);
        }
    }
    c.arg("--out").arg(out);
    c
}

pub fn run(out: &Path, args: &[&str]) -> Output {
    command(out).args(args).output().expect("spawn metasynth")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[track_caller]
pub fn ok(out: &Path, args: &[&str]) -> Output {
    let o = run(out, args);
    assert_eq!(code(&o), 0, "{args:?} failed: {}", stderr(&o));
    o
}

/// ingest, chunk, index and generate the fixture corpus offline.
pub fn prepare(out: &Path) {
    ok(out, &["ingest", fixture("mad_mini.jsonl").to_str().unwrap()]);
    ok(out, &["chunk"]);
    ok(out, &["index"]);
    ok(out, &["generate"]);
}

/// A running `metasynth serve`.
pub struct Served {
    pub child: Child,
    pub base: String,
}

impl Served {
    /// Starts on an ephemeral port and waits for the listening line.
    pub fn start(out: &Path, extra: &[&str]) -> Served {
        let mut child = command(out)
            .args(["serve", "--port", "0"])
            .args(extra)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .expect("spawn serve");
        let mut line = String::new();
        BufReader::new(child.stdout.as_mut().unwrap())
            .read_line(&mut line)
            .unwrap();
        let Some(addr) = line.strip_prefix("listening on ") else {
            let _ = child.kill();
            let out = child.wait_with_output().unwrap();
            panic!("serve did not start: {line:?} {}", String::from_utf8_lossy(&out.stderr));
        };
        let base = addr.split_whitespace().next().unwrap().to_string();
        Served { child, base }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    /// SIGTERM, then wait for a clean exit.
    pub fn stop(mut self) -> i32 {
        let pid = self.child.id().to_string();
        Command::new("kill").args(["-TERM", &pid]).status().unwrap();
        let status = self.child.wait().unwrap();
        status.code().unwrap_or(-1)
    }
}

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(30)))
        .http_status_as_error(false)
        .build()
        .into()
}

pub fn get(url: &str) -> (u16, String) {
    let mut r = agent().get(url).call().unwrap();
    (r.status().as_u16(), r.body_mut().read_to_string().unwrap_or_default())
}

pub fn post(url: &str, body: serde_json::Value) -> (u16, String) {
    let mut r = agent().post(url).send_json(&body).unwrap();
    (r.status().as_u16(), r.body_mut().read_to_string().unwrap_or_default())
}

pub fn ballot(base: &str, task: &str, evaluator: &str, label: &str) -> u16 {
    post(
        &format!("{base}/api/ballots"),
        serde_json::json!({ "task_id": task, "evaluator": evaluator, "label": label }),
    )
    .0
}

/// An axum app on an ephemeral port, served from a background runtime until
/// dropped.
pub struct MockServer {
    pub base: String,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    pub fn start(app: Router) -> MockServer {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stop_rx.await;
                    })
                    .await
                    .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        MockServer {
            base: format!("http://{addr}"),
            stop: Some(stop_tx),
            thread: Some(thread),
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
