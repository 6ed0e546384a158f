//! HTTP/JSON front end over the blocking operations in `g2t_core::api`.
//!
//! Short operations answer directly; training and benchmarking run as
//! background jobs that clients poll under `/jobs/{id}`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use g2t_core::api::{
    self, ApiError, BenchRequest, ErrorBody, ExportEmbeddingsRequest, GenerateRequest, GraphDumpRequest, Health,
    JobState, JobStatus, ReportRequest, SolveRequest, TrainRequest,
};
use serde::Serialize;

#[derive(Default)]
pub struct AppState {
    jobs: Mutex<HashMap<String, JobStatus>>,
}

pub type Shared = Arc<AppState>;

pub fn router() -> Router {
    router_with(Arc::new(AppState::default()))
}

pub fn router_with(state: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/corpus/generate", post(generate))
        .route("/jobs/train", post(start_train))
        .route("/jobs/bench", post(start_bench))
        .route("/jobs/:id", get(job))
        .route("/report", post(report))
        .route("/solve", post(solve))
        .route("/graph/dump", post(graph_dump))
        .route("/embeddings/export", post(export_embeddings))
        .with_state(state)
}

/// Serves the API on an already bound listener until the process ends.
pub async fn serve(listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router()).await
}

pub struct AppError(ApiError);

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = match self.0 {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(ErrorBody { error: self.0.to_string() })).into_response()
    }
}

type Reply<T> = Result<Json<T>, AppError>;

/// Runs a blocking operation off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Reply<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map(Json).map_err(AppError),
        Err(e) => Err(AppError(ApiError::Internal(format!("worker panicked: {e}")))),
    }
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok".into(), version: env!("CARGO_PKG_VERSION").into() })
}

async fn generate(Json(req): Json<GenerateRequest>) -> Reply<api::GenerateResponse> {
    blocking(move || api::generate(&req)).await
}

async fn report(Json(req): Json<ReportRequest>) -> Reply<api::ReportResponse> {
    blocking(move || api::report(&req)).await
}

async fn solve(Json(req): Json<SolveRequest>) -> Reply<g2t_core::bench::BenchRecord> {
    blocking(move || api::solve(&req)).await
}

async fn graph_dump(Json(req): Json<GraphDumpRequest>) -> Reply<api::TextResponse> {
    blocking(move || api::graph_dump(&req)).await
}

async fn export_embeddings(Json(req): Json<ExportEmbeddingsRequest>) -> Reply<api::TextResponse> {
    blocking(move || api::export(&req)).await
}

async fn job(State(state): State<Shared>, Path(id): Path<String>) -> Reply<JobStatus> {
    let jobs = state.jobs.lock().expect("jobs lock");
    jobs.get(&id).cloned().map(Json).ok_or_else(|| AppError(ApiError::NotFound(format!("job {id}"))))
}

fn update(state: &AppState, id: &str, f: impl FnOnce(&mut JobStatus)) {
    if let Some(j) = state.jobs.lock().expect("jobs lock").get_mut(id) {
        f(j);
    }
}

/// Registers a job and runs `work` on the blocking pool; `work` receives a
/// progress callback.
fn spawn_job<T: Serialize>(
    state: Shared,
    kind: &str,
    work: impl FnOnce(&dyn Fn(String)) -> Result<T, ApiError> + Send + 'static,
) -> JobStatus {
    let id = uuid::Uuid::new_v4().to_string();
    let status = JobStatus { id: id.clone(), kind: kind.into(), state: JobState::Running, progress: None, result: None, error: None };
    state.jobs.lock().expect("jobs lock").insert(id.clone(), status.clone());
    tracing::info!(job = %id, kind, "job started");
    tokio::task::spawn_blocking(move || {
        let progress = |p: String| update(&state, &id, |j| j.progress = Some(p));
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| work(&progress)));
        update(&state, &id, |j| match outcome {
            Ok(Ok(v)) => {
                j.state = JobState::Done;
                j.result = Some(serde_json::to_value(v).expect("job results serialize"));
            }
            Ok(Err(e)) => {
                j.state = JobState::Failed;
                j.error = Some(e.to_string());
            }
            Err(_) => {
                j.state = JobState::Failed;
                j.error = Some("job panicked".into());
            }
        });
        tracing::info!(job = %id, "job finished");
    });
    status
}

async fn start_train(State(state): State<Shared>, Json(req): Json<TrainRequest>) -> (StatusCode, Json<JobStatus>) {
    let status = spawn_job(state, "train", move |progress| {
        api::train(&req, |step, loss| progress(format!("step {} loss {loss:.6}", step + 1)))
    });
    (StatusCode::ACCEPTED, Json(status))
}

async fn start_bench(State(state): State<Shared>, Json(req): Json<BenchRequest>) -> (StatusCode, Json<JobStatus>) {
    let status = spawn_job(state, "bench", move |_| api::bench(&req));
    (StatusCode::ACCEPTED, Json(status))
}
