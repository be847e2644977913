//! Human relevance evaluation of generated abstracts.
//!
//! Each task is judged independently by a fixed number of evaluators (three
//! by default) as relevant, somewhat relevant or irrelevant; the final label
//! is the majority vote.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Corpus;
use crate::embed::Embedder;
use crate::generation::{GenerationJob, JobStatus};
use crate::index::hex_lower;
use crate::metrics::{bleu, rouge_l, rouge_n, swgt, BleuConfig, MetricError};

pub const DEFAULT_REQUIRED_BALLOTS: usize = 3;
/// Words of each support abstract shown to evaluators.
pub const PREVIEW_WORDS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelevanceLabel {
    #[serde(rename = "REL")]
    Relevant,
    #[serde(rename = "SWR")]
    SomewhatRelevant,
    #[serde(rename = "IRL")]
    Irrelevant,
}

impl RelevanceLabel {
    pub const ALL: [RelevanceLabel; 3] = [
        RelevanceLabel::Relevant,
        RelevanceLabel::SomewhatRelevant,
        RelevanceLabel::Irrelevant,
    ];

    pub fn code(self) -> &'static str {
        match self {
            RelevanceLabel::Relevant => "REL",
            RelevanceLabel::SomewhatRelevant => "SWR",
            RelevanceLabel::Irrelevant => "IRL",
        }
    }
}

impl fmt::Display for RelevanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for RelevanceLabel {
    type Err = EvaluationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "REL" => Ok(RelevanceLabel::Relevant),
            "SWR" => Ok(RelevanceLabel::SomewhatRelevant),
            "IRL" => Ok(RelevanceLabel::Irrelevant),
            other => Err(EvaluationError::UnknownLabel(other.to_string())),
        }
    }
}

/// How a vote with no single most frequent label is resolved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Somewhat relevant.
    #[default]
    Middle,
    /// The least favourable of the tied labels.
    WorstCase,
}

/// Hard vote over ballots. `None` for an empty slice.
pub fn aggregate_labels(labels: &[RelevanceLabel], tie: TieRule) -> Option<RelevanceLabel> {
    let mut counts = [0usize; 3];
    for l in labels {
        counts[*l as usize] += 1;
    }
    let top = *counts.iter().max()?;
    if top == 0 {
        return None;
    }
    let winners: Vec<RelevanceLabel> = RelevanceLabel::ALL
        .into_iter()
        .filter(|l| counts[*l as usize] == top)
        .collect();
    match (winners.as_slice(), tie) {
        ([only], _) => Some(*only),
        (_, TieRule::Middle) => Some(RelevanceLabel::SomewhatRelevant),
        (tied, TieRule::WorstCase) => tied.iter().max().copied(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Open,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationTask {
    pub id: String,
    pub job_ref: String,
    pub model_tag: String,
    pub generated_text: String,
    pub ground_truth_text: String,
    pub support_preview: Vec<String>,
    pub required_ballots: usize,
    pub state: TaskState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationBallot {
    pub task_id: String,
    pub evaluator_id: String,
    pub label: RelevanceLabel,
    /// Unix time in milliseconds.
    pub submitted_at: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvaluationError {
    #[error("unknown relevance label {0:?} (expected REL, SWR or IRL)")]
    UnknownLabel(String),
    #[error("job {0:?} appears more than once")]
    DuplicateJob(String),
    #[error("task {0:?} appears more than once")]
    DuplicateTask(String),
    #[error("job {job:?} refers to record {record:?}, which is not in the corpus")]
    MissingRecord { job: String, record: String },
    #[error("unknown evaluator {0:?}")]
    UnknownEvaluator(String),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("evaluator {evaluator:?} already judged task {task:?}")]
    DuplicateBallot { task: String, evaluator: String },
    #[error("task {0:?} is already complete")]
    TaskComplete(String),
    #[error("task {0:?} is not complete")]
    TaskNotComplete(String),
    #[error("required ballots must be positive")]
    ZeroRequiredBallots,
    #[error("no tasks for model {0:?}")]
    NoTasks(String),
    #[error("{open} of {total} tasks for model {tag:?} are incomplete")]
    IncompleteTasks { tag: String, open: usize, total: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// A job that did not become a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedJob {
    pub job_id: String,
    pub reason: String,
}

fn preview(text: &str) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() <= PREVIEW_WORDS {
        words.join(" ")
    } else {
        format!("{} ...", words[..PREVIEW_WORDS].join(" "))
    }
}

/// One open task per finished job, with the record's meta abstract as ground
/// truth. Jobs that are not done (or have no output) are skipped.
pub fn create_tasks(
    jobs: &[GenerationJob],
    corpus: &Corpus,
    model_tag: &str,
    required_ballots: usize,
) -> Result<(Vec<EvaluationTask>, Vec<SkippedJob>), EvaluationError> {
    if required_ballots == 0 {
        return Err(EvaluationError::ZeroRequiredBallots);
    }
    let mut seen = BTreeSet::new();
    let mut tasks = Vec::new();
    let mut skipped = Vec::new();
    for job in jobs {
        if !seen.insert(job.id.as_str()) {
            return Err(EvaluationError::DuplicateJob(job.id.clone()));
        }
        let output = match (&job.status, &job.output) {
            (JobStatus::Done, Some(o)) if !o.trim().is_empty() => o,
            _ => {
                skipped.push(SkippedJob {
                    job_id: job.id.clone(),
                    reason: format!("job is {} without output", job.status),
                });
                continue;
            }
        };
        let record = corpus.get(&job.record_id).ok_or_else(|| EvaluationError::MissingRecord {
            job: job.id.clone(),
            record: job.record_id.clone(),
        })?;
        tasks.push(EvaluationTask {
            id: job.id.clone(),
            job_ref: job.id.clone(),
            model_tag: model_tag.to_string(),
            generated_text: output.clone(),
            ground_truth_text: record.meta_abstract.clone(),
            support_preview: record.supports.iter().map(|s| preview(&s.text)).collect(),
            required_ballots,
            state: TaskState::Open,
        });
    }
    Ok((tasks, skipped))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Progress {
    pub open: usize,
    pub complete: usize,
    pub ballots_total: usize,
}

/// Tasks and their ballots. Ballots are only ever appended.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskPool {
    tasks: Vec<EvaluationTask>,
    positions: BTreeMap<String, usize>,
    ballots: Vec<Vec<EvaluationBallot>>,
    evaluators: BTreeSet<String>,
    open_registration: bool,
    tie_rule: TieRule,
}

impl TaskPool {
    /// A pool of tasks with no ballots. Any evaluator id is accepted until
    /// [`TaskPool::restrict_evaluators`] is called.
    pub fn new(tasks: Vec<EvaluationTask>) -> Result<Self, EvaluationError> {
        let mut positions = BTreeMap::new();
        let mut tasks = tasks;
        for (i, t) in tasks.iter_mut().enumerate() {
            if t.required_ballots == 0 {
                return Err(EvaluationError::ZeroRequiredBallots);
            }
            if positions.insert(t.id.clone(), i).is_some() {
                return Err(EvaluationError::DuplicateTask(t.id.clone()));
            }
            t.state = TaskState::Open;
        }
        let n = tasks.len();
        Ok(TaskPool {
            tasks,
            positions,
            ballots: alloc::vec![Vec::new(); n],
            evaluators: BTreeSet::new(),
            open_registration: true,
            tie_rule: TieRule::default(),
        })
    }

    pub fn with_tie_rule(mut self, tie_rule: TieRule) -> Self {
        self.tie_rule = tie_rule;
        self
    }

    pub fn tie_rule(&self) -> TieRule {
        self.tie_rule
    }

    /// Only the given evaluators may fetch tasks or vote from now on.
    pub fn restrict_evaluators<I, S>(&mut self, ids: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.open_registration = false;
        self.evaluators.extend(ids.into_iter().map(Into::into));
    }

    pub fn register_evaluator(&mut self, id: impl Into<String>) {
        self.evaluators.insert(id.into());
    }

    fn check_evaluator(&self, id: &str) -> Result<(), EvaluationError> {
        if self.open_registration || self.evaluators.contains(id) {
            Ok(())
        } else {
            Err(EvaluationError::UnknownEvaluator(id.to_string()))
        }
    }

    pub fn tasks(&self) -> &[EvaluationTask] {
        &self.tasks
    }

    pub fn task(&self, id: &str) -> Option<&EvaluationTask> {
        self.positions.get(id).map(|&i| &self.tasks[i])
    }

    pub fn ballots_for(&self, task_id: &str) -> Option<&[EvaluationBallot]> {
        self.positions.get(task_id).map(|&i| self.ballots[i].as_slice())
    }

    /// All ballots, grouped by task in task order.
    pub fn ballots(&self) -> impl Iterator<Item = &EvaluationBallot> {
        self.ballots.iter().flatten()
    }

    /// An open task the evaluator has not judged yet, preferring tasks with
    /// the fewest ballots and then the earliest created.
    pub fn next_task(&self, evaluator_id: &str) -> Result<Option<&EvaluationTask>, EvaluationError> {
        self.check_evaluator(evaluator_id)?;
        Ok(self
            .tasks
            .iter()
            .zip(&self.ballots)
            .enumerate()
            .filter(|(_, (t, b))| {
                t.state == TaskState::Open && !b.iter().any(|x| x.evaluator_id == evaluator_id)
            })
            .min_by_key(|(i, (_, b))| (b.len(), *i))
            .map(|(_, (t, _))| t))
    }

    /// Whether [`TaskPool::submit_ballot`] would accept `ballot`.
    pub fn check_ballot(&self, ballot: &EvaluationBallot) -> Result<(), EvaluationError> {
        self.check_evaluator(&ballot.evaluator_id)?;
        let &i = self
            .positions
            .get(&ballot.task_id)
            .ok_or_else(|| EvaluationError::UnknownTask(ballot.task_id.clone()))?;
        let task = &self.tasks[i];
        if task.state == TaskState::Complete {
            return Err(EvaluationError::TaskComplete(task.id.clone()));
        }
        if self.ballots[i].iter().any(|b| b.evaluator_id == ballot.evaluator_id) {
            return Err(EvaluationError::DuplicateBallot {
                task: task.id.clone(),
                evaluator: ballot.evaluator_id.clone(),
            });
        }
        Ok(())
    }

    /// Records a ballot. The task completes on its last required ballot.
    pub fn submit_ballot(&mut self, ballot: EvaluationBallot) -> Result<TaskState, EvaluationError> {
        self.check_ballot(&ballot)?;
        let i = self.positions[&ballot.task_id];
        let task = &mut self.tasks[i];
        let ballots = &mut self.ballots[i];
        ballots.push(ballot);
        if ballots.len() >= task.required_ballots {
            task.state = TaskState::Complete;
        }
        Ok(task.state)
    }

    /// Tasks the evaluator has already judged.
    pub fn judged_by(&self, evaluator_id: &str) -> usize {
        self.ballots
            .iter()
            .filter(|b| b.iter().any(|x| x.evaluator_id == evaluator_id))
            .count()
    }

    /// Final label of a complete task.
    pub fn aggregate(&self, task_id: &str) -> Result<RelevanceLabel, EvaluationError> {
        let &i = self
            .positions
            .get(task_id)
            .ok_or_else(|| EvaluationError::UnknownTask(task_id.to_string()))?;
        if self.tasks[i].state != TaskState::Complete {
            return Err(EvaluationError::TaskNotComplete(task_id.to_string()));
        }
        let labels: Vec<RelevanceLabel> = self.ballots[i].iter().map(|b| b.label).collect();
        Ok(aggregate_labels(&labels, self.tie_rule).expect("complete tasks have ballots"))
    }

    pub fn progress(&self) -> Progress {
        let complete = self.tasks.iter().filter(|t| t.state == TaskState::Complete).count();
        Progress {
            open: self.tasks.len() - complete,
            complete,
            ballots_total: self.ballots.iter().map(Vec::len).sum(),
        }
    }

    /// Complete tasks of one model with their final labels.
    pub fn finals(&self, model_tag: &str) -> Result<Vec<(&EvaluationTask, RelevanceLabel)>, EvaluationError> {
        let tagged: Vec<&EvaluationTask> = self.tasks.iter().filter(|t| t.model_tag == model_tag).collect();
        if tagged.is_empty() {
            return Err(EvaluationError::NoTasks(model_tag.to_string()));
        }
        let open = tagged.iter().filter(|t| t.state != TaskState::Complete).count();
        if open > 0 {
            return Err(EvaluationError::IncompleteTasks {
                tag: model_tag.to_string(),
                open,
                total: tagged.len(),
            });
        }
        tagged
            .into_iter()
            .map(|t| Ok((t, self.aggregate(&t.id)?)))
            .collect()
    }
}

/// Salted SHA-256 of an evaluator id, for exports.
pub fn anonymize_evaluator(salt: &str, evaluator_id: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update([0u8]);
    h.update(evaluator_id.as_bytes());
    let mut s = hex_lower(&h.finalize());
    s.truncate(16);
    s
}

/// Automatic metrics of one task's generated text against its ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskScores {
    pub bleu: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub swgt: f64,
}

impl TaskScores {
    /// ROUGE entries are F1 scores.
    pub fn compute<E: Embedder + ?Sized>(
        task: &EvaluationTask,
        embedder: &E,
        bleu_cfg: &BleuConfig,
    ) -> Result<Self, MetricError> {
        let (g, t) = (task.generated_text.as_str(), task.ground_truth_text.as_str());
        Ok(TaskScores {
            bleu: bleu(g, &[t], bleu_cfg)?,
            rouge1: rouge_n(g, t, 1)?.f1,
            rouge2: rouge_n(g, t, 2)?.f1,
            rouge_l: rouge_l(g, t)?.f1,
            swgt: swgt(g, t, embedder)?,
        })
    }
}

/// Mean automatic metrics over the tasks with one final label (0..1 scale).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub tasks: usize,
    pub bleu: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model_tag: String,
    pub tasks: usize,
    pub rel_pct: f64,
    pub swr_pct: f64,
    pub irl_pct: f64,
    /// `None` when no task ended with that label.
    pub relevant: Option<ClassMetrics>,
    pub somewhat_relevant: Option<ClassMetrics>,
    pub irrelevant: Option<ClassMetrics>,
    /// Mean SWGT over all tasks, in percent.
    pub swgt_pct: f64,
}

/// Report for one model from precomputed per-task scores.
pub fn build_report_with<F>(pool: &TaskPool, model_tag: &str, mut score: F) -> Result<ModelReport, EvaluationError>
where
    F: FnMut(&EvaluationTask) -> Result<TaskScores, MetricError>,
{
    let finals = pool.finals(model_tag)?;
    let n = finals.len();
    let mut counts = [0usize; 3];
    let mut sums = [[0.0f64; 4]; 3];
    let mut swgt_sum = 0.0;
    for (task, label) in &finals {
        let s = score(task)?;
        let k = *label as usize;
        counts[k] += 1;
        for (acc, v) in sums[k].iter_mut().zip([s.bleu, s.rouge1, s.rouge2, s.rouge_l]) {
            *acc += v;
        }
        swgt_sum += s.swgt;
    }
    let class = |k: usize| {
        (counts[k] > 0).then(|| {
            let c = counts[k] as f64;
            ClassMetrics {
                tasks: counts[k],
                bleu: sums[k][0] / c,
                rouge1: sums[k][1] / c,
                rouge2: sums[k][2] / c,
                rouge_l: sums[k][3] / c,
            }
        })
    };
    let pct = |k: usize| 100.0 * counts[k] as f64 / n as f64;
    Ok(ModelReport {
        model_tag: model_tag.to_string(),
        tasks: n,
        rel_pct: pct(0),
        swr_pct: pct(1),
        irl_pct: pct(2),
        relevant: class(0),
        somewhat_relevant: class(1),
        irrelevant: class(2),
        swgt_pct: swgt_sum / n as f64,
    })
}

pub fn build_report<E: Embedder + ?Sized>(
    pool: &TaskPool,
    model_tag: &str,
    embedder: &E,
    bleu_cfg: &BleuConfig,
) -> Result<ModelReport, EvaluationError> {
    build_report_with(pool, model_tag, |t| TaskScores::compute(t, embedder, bleu_cfg))
}
