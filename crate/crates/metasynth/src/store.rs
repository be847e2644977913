//! Durable evaluation state: a task snapshot written once and an append-only
//! ballot log replayed on open.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use metasynth_core::{EvaluationBallot, EvaluationError, EvaluationTask, TaskPool, TaskState, TieRule};
use serde::{Deserialize, Serialize};

use crate::corpus_io::{write_json, IoError};

pub const TASKS_FILE: &str = "tasks.json";
pub const BALLOTS_FILE: &str = "ballots.jsonl";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    tie_rule: TieRule,
    /// Empty means open registration.
    #[serde(default)]
    evaluators: Vec<String>,
    tasks: Vec<EvaluationTask>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{}: evaluation store already exists", .0.display())]
    Exists(PathBuf),
    #[error("{}: no evaluation store (missing {TASKS_FILE})", .0.display())]
    Missing(PathBuf),
    #[error("{}:{line}: corrupt ballot log: {reason}", path.display())]
    CorruptLog { path: PathBuf, line: usize, reason: String },
    #[error("{}: corrupt task snapshot: {reason}", path.display())]
    CorruptSnapshot { path: PathBuf, reason: String },
    #[error(transparent)]
    Rejected(#[from] EvaluationError),
}

pub struct BallotStore {
    dir: PathBuf,
    pool: TaskPool,
    log: File,
}

fn build_pool(snapshot: Snapshot) -> Result<TaskPool, EvaluationError> {
    let mut pool = TaskPool::new(snapshot.tasks)?.with_tie_rule(snapshot.tie_rule);
    if !snapshot.evaluators.is_empty() {
        pool.restrict_evaluators(snapshot.evaluators);
    }
    Ok(pool)
}

impl BallotStore {
    pub fn exists(dir: &Path) -> bool {
        dir.join(TASKS_FILE).is_file()
    }

    /// Initializes a store holding `tasks` and no ballots.
    pub fn create(
        dir: &Path,
        tasks: Vec<EvaluationTask>,
        tie_rule: TieRule,
        evaluators: Vec<String>,
    ) -> Result<Self, StoreError> {
        if Self::exists(dir) {
            return Err(StoreError::Exists(dir.to_path_buf()));
        }
        let snapshot = Snapshot {
            version: SNAPSHOT_VERSION,
            tie_rule,
            evaluators,
            tasks,
        };
        let pool = build_pool(snapshot.clone())?;
        let log_path = dir.join(BALLOTS_FILE);
        fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
        File::create(&log_path).map_err(|e| IoError::io(&log_path, e))?;
        // The snapshot goes last: its presence marks a complete store.
        write_json(&dir.join(TASKS_FILE), &snapshot)?;
        Self::open(dir).inspect(|s| debug_assert_eq!(s.pool, pool))
    }

    /// Loads the snapshot and replays the ballot log. Any unreadable or
    /// rejected log line makes the whole store unusable.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        let tasks_path = dir.join(TASKS_FILE);
        if !tasks_path.is_file() {
            return Err(StoreError::Missing(dir.to_path_buf()));
        }
        let text = fs::read_to_string(&tasks_path).map_err(|e| IoError::io(&tasks_path, e))?;
        let snapshot: Snapshot = serde_json::from_str(&text).map_err(|e| StoreError::CorruptSnapshot {
            path: tasks_path.clone(),
            reason: e.to_string(),
        })?;
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(StoreError::CorruptSnapshot {
                path: tasks_path,
                reason: format!("unsupported version {}", snapshot.version),
            });
        }
        let mut pool = build_pool(snapshot).map_err(|e| StoreError::CorruptSnapshot {
            path: tasks_path.clone(),
            reason: e.to_string(),
        })?;

        let log_path = dir.join(BALLOTS_FILE);
        let corrupt = |line: usize, reason: String| StoreError::CorruptLog {
            path: log_path.clone(),
            line,
            reason,
        };
        let bytes = fs::read(&log_path).map_err(|e| IoError::io(&log_path, e))?;
        if !bytes.is_empty() && !bytes.ends_with(b"\n") {
            let line = bytes.iter().filter(|&&b| b == b'\n').count() + 1;
            return Err(corrupt(line, "incomplete final line".into()));
        }
        for (i, line) in BufReader::new(bytes.as_slice()).lines().enumerate() {
            let line = line.map_err(|e| corrupt(i + 1, e.to_string()))?;
            let ballot: EvaluationBallot = serde_json::from_str(&line).map_err(|e| corrupt(i + 1, e.to_string()))?;
            pool.submit_ballot(ballot).map_err(|e| corrupt(i + 1, e.to_string()))?;
        }

        let log = OpenOptions::new()
            .append(true)
            .open(&log_path)
            .map_err(|e| IoError::io(&log_path, e))?;
        Ok(BallotStore {
            dir: dir.to_path_buf(),
            pool,
            log,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn pool(&self) -> &TaskPool {
        &self.pool
    }

    /// Validates, logs durably, then applies a ballot.
    pub fn submit(&mut self, ballot: EvaluationBallot) -> Result<TaskState, StoreError> {
        self.pool.check_ballot(&ballot)?;
        let mut line = serde_json::to_vec(&ballot).map_err(|e| self.io(io::Error::other(e)))?;
        line.push(b'\n');
        self.log.write_all(&line).map_err(|e| self.io(e))?;
        self.log.sync_data().map_err(|e| self.io(e))?;
        Ok(self.pool.submit_ballot(ballot)?)
    }

    pub fn flush(&mut self) -> Result<(), StoreError> {
        self.log.sync_all().map_err(|e| self.io(e))
    }

    fn io(&self, e: io::Error) -> StoreError {
        StoreError::Io(IoError::io(&self.dir.join(BALLOTS_FILE), e))
    }
}
