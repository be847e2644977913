//! HTTP API for the annotation console and scripted clients.
//!
//! - `GET  /api/tasks/next?evaluator=ID` next task payload, or 204
//! - `POST /api/ballots` `{task_id, evaluator, label}`, 201 on success
//! - `GET  /api/reports/{model_tag}` the model report
//! - `GET  /api/progress` `{open, complete, ballots_total}`

use std::future::Future;
use std::io;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, PoisonError};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use metasynth_core::{EvaluationBallot, EvaluationError, ModelReport, RelevanceLabel, TaskPool, TaskState};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use crate::store::{BallotStore, StoreError};

/// Computes a model's report from a snapshot of the pool.
pub type Reporter = Arc<dyn Fn(&TaskPool, &str) -> Result<ModelReport, EvaluationError> + Send + Sync>;

#[derive(Debug, Clone, Default)]
pub struct ServerOptions {
    /// Reject every ballot with 403.
    pub readonly: bool,
    /// When set, API calls must send `Authorization: Bearer <token>`.
    pub token: Option<String>,
    /// Served at `/` (the annotation console build).
    pub static_dir: Option<PathBuf>,
}

pub struct AppState {
    store: Mutex<BallotStore>,
    reporter: Reporter,
    options: ServerOptions,
}

impl AppState {
    pub fn new(store: BallotStore, reporter: Reporter, options: ServerOptions) -> Arc<Self> {
        Arc::new(AppState {
            store: Mutex::new(store),
            reporter,
            options,
        })
    }

    /// Every ballot mutation happens under this lock, so a task's completing
    /// ballot is applied exactly once.
    fn store(&self) -> std::sync::MutexGuard<'_, BallotStore> {
        self.store.lock().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn flush(&self) -> Result<(), StoreError> {
        self.store().flush()
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Position {
    pub done: usize,
    pub total: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TaskPayload {
    pub id: String,
    pub generated_text: String,
    pub ground_truth_text: String,
    pub support_preview: Vec<String>,
    pub position: Position,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BallotRequest {
    pub task_id: String,
    pub evaluator: String,
    pub label: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct BallotReceipt {
    pub task_id: String,
    pub state: TaskState,
}

#[derive(Deserialize)]
struct NextQuery {
    evaluator: Option<String>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<EvaluationError> for ApiError {
    fn from(e: EvaluationError) -> Self {
        use EvaluationError::*;
        let code = match e {
            UnknownLabel(_) => StatusCode::UNPROCESSABLE_ENTITY,
            UnknownEvaluator(_) => StatusCode::FORBIDDEN,
            UnknownTask(_) | NoTasks(_) => StatusCode::NOT_FOUND,
            DuplicateBallot { .. } | TaskComplete(_) | TaskNotComplete(_) | IncompleteTasks { .. } => {
                StatusCode::CONFLICT
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Rejected(e) => e.into(),
            other => {
                log::error!("{other}");
                ApiError(StatusCode::INTERNAL_SERVER_ERROR, other.to_string())
            }
        }
    }
}

async fn next_task(State(app): State<Arc<AppState>>, Query(q): Query<NextQuery>) -> Result<Response, ApiError> {
    let evaluator = q
        .evaluator
        .filter(|e| !e.trim().is_empty())
        .ok_or_else(|| ApiError(StatusCode::BAD_REQUEST, "missing evaluator parameter".into()))?;
    let store = app.store();
    let pool = store.pool();
    let Some(task) = pool.next_task(&evaluator)? else {
        return Ok(StatusCode::NO_CONTENT.into_response());
    };
    let payload = TaskPayload {
        id: task.id.clone(),
        generated_text: task.generated_text.clone(),
        ground_truth_text: task.ground_truth_text.clone(),
        support_preview: task.support_preview.clone(),
        position: Position {
            done: pool.judged_by(&evaluator),
            total: pool.tasks().len(),
        },
    };
    Ok(Json(payload).into_response())
}

async fn submit_ballot(
    State(app): State<Arc<AppState>>,
    Json(req): Json<BallotRequest>,
) -> Result<(StatusCode, Json<BallotReceipt>), ApiError> {
    if app.options.readonly {
        return Err(ApiError(StatusCode::FORBIDDEN, "server is read-only".into()));
    }
    let label: RelevanceLabel = req.label.parse()?;
    let submitted_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64);
    let ballot = EvaluationBallot {
        task_id: req.task_id.clone(),
        evaluator_id: req.evaluator,
        label,
        submitted_at,
    };
    let state = app.store().submit(ballot)?;
    Ok((
        StatusCode::CREATED,
        Json(BallotReceipt {
            task_id: req.task_id,
            state,
        }),
    ))
}

async fn report(State(app): State<Arc<AppState>>, Path(tag): Path<String>) -> Result<Json<ModelReport>, ApiError> {
    let snapshot = app.store().pool().clone();
    let reporter = app.reporter.clone();
    // Scoring may embed texts over the network; keep it off the async workers.
    let result = tokio::task::spawn_blocking(move || reporter(&snapshot, &tag))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(result?))
}

async fn progress(State(app): State<Arc<AppState>>) -> Json<metasynth_core::Progress> {
    Json(app.store().pool().progress())
}

async fn require_token(State(app): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let Some(token) = &app.options.token else {
        return next.run(req).await;
    };
    let ok = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == token);
    if ok {
        next.run(req).await
    } else {
        ApiError(StatusCode::UNAUTHORIZED, "missing or wrong bearer token".into()).into_response()
    }
}

pub fn router(app: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/ballots", post(submit_ballot))
        .route("/api/reports/{model_tag}", get(report))
        .route("/api/progress", get(progress))
        .route_layer(middleware::from_fn_with_state(app.clone(), require_token));
    let router = match &app.options.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    router.with_state(app)
}

/// Serves until `shutdown` resolves, then syncs the ballot log.
pub async fn serve(
    listener: TcpListener,
    app: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    axum::serve(listener, router(app.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    app.flush().map_err(io::Error::other)
}
