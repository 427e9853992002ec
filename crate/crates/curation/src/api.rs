//! HTTP JSON API over a [`RunStore`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use bioextract_core::chem::FingerprintParams;
use bioextract_core::join::{rank_for_annotation, AnnotationCandidate};
use bioextract_core::markush::RGroupTable;
use bioextract_core::record::ExtractionRecord;

use crate::error::CurationError;
use crate::model::*;
use crate::render::page_svg;
use crate::state::{PreviewRow, RunState, TaskCounts};
use crate::store::{RunSource, RunStore};

/// Header carrying the reviewer's id on every request that appends events.
pub const EDITOR_HEADER: &str = "x-editor-id";

pub fn router(store: Arc<RunStore>) -> Router {
    Router::new()
        .route("/runs", post(create_run).get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/tasks", get(list_tasks))
        .route("/tasks/{id}/decision", post(decide))
        .route("/runs/{id}/recompute", post(recompute))
        .route("/runs/{id}/export", get(export))
        .route("/runs/{id}/pages/{n}/image", get(page_image))
        .route("/runs/{id}/annotation", get(annotation))
        .route("/runs/{id}/preview/markush", post(preview_markush))
        .route("/runs/{id}/insert", post(insert))
        .route("/runs/{id}/waive", post(waive))
        .with_state(store)
}

/// Errors as `{schema_version, error, message}` with a fitting status.
pub struct ApiError(StatusCode, &'static str, String);

impl From<CurationError> for ApiError {
    fn from(e: CurationError) -> Self {
        use CurationError::*;
        let (status, kind) = match &e {
            UnknownRun(_) => (StatusCode::NOT_FOUND, "unknown_run"),
            UnknownTask(_) => (StatusCode::NOT_FOUND, "unknown_task"),
            UnknownPage(_) => (StatusCode::NOT_FOUND, "unknown_page"),
            DocumentNotFound(_) => (StatusCode::NOT_FOUND, "document_not_found"),
            NotReady(_) => (StatusCode::CONFLICT, "not_ready"),
            TerminalTask { .. } => (StatusCode::CONFLICT, "terminal_task"),
            InvalidPayload(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_payload"),
            PendingUpstream(_) => (StatusCode::CONFLICT, "pending_upstream"),
            NotExportable(_) => (StatusCode::CONFLICT, "not_exportable"),
            Dirty(_) => (StatusCode::CONFLICT, "dirty"),
            NoPipeline => (StatusCode::SERVICE_UNAVAILABLE, "no_pipeline"),
            Sequence { .. } | Io { .. } | Json { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError(status, kind, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({"schema_version": SCHEMA_VERSION, "error": self.1, "message": self.2}))).into_response()
    }
}

fn bad_request(message: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, "bad_request", message.into())
}

type ApiResult<T> = Result<T, ApiError>;

fn editor(headers: &HeaderMap) -> ApiResult<String> {
    headers
        .get(EDITOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string)
        .ok_or_else(|| bad_request(format!("missing {EDITOR_HEADER} header")))
}

fn check_version(v: Option<u32>) -> ApiResult<()> {
    match v {
        Some(v) if v != SCHEMA_VERSION => Err(bad_request(format!("unsupported schema_version {v}; this server speaks {SCHEMA_VERSION}"))),
        _ => Ok(()),
    }
}

/// Runs store work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, CurationError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

#[derive(Debug, Deserialize)]
pub struct CreateRunRequest {
    #[serde(default)]
    pub schema_version: Option<u32>,
    /// Server-side path of a document to extract.
    #[serde(default)]
    pub document: Option<PathBuf>,
    /// An already extracted record.
    #[serde(default)]
    pub record: Option<Box<ExtractionRecord>>,
    #[serde(default)]
    pub annotation_queries: Vec<String>,
}

async fn create_run(State(store): State<Arc<RunStore>>, Json(req): Json<CreateRunRequest>) -> ApiResult<Response> {
    check_version(req.schema_version)?;
    let source = match (req.document, req.record) {
        (Some(path), None) => RunSource::Document(path),
        (None, Some(record)) => RunSource::Record(record),
        _ => return Err(bad_request("give exactly one of document or record")),
    };
    let queries = req.annotation_queries;
    let created = blocking(move || store.create_run(source, queries)).await?;
    let status = if created.duplicate { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(json!({"schema_version": SCHEMA_VERSION, "run_id": created.run_id, "duplicate": created.duplicate, "status": created.status}))).into_response())
}

async fn list_runs(State(store): State<Arc<RunStore>>) -> ApiResult<Json<serde_json::Value>> {
    let runs = blocking(move || store.run_ids().iter().map(|id| store.meta(id)).collect::<Result<Vec<_>, _>>()).await?;
    let runs: Vec<_> =
        runs.iter().map(|m| json!({"run_id": m.run_id, "doc_id": m.doc_id, "status": m.status})).collect();
    Ok(Json(json!({"schema_version": SCHEMA_VERSION, "runs": runs})))
}

/// `GET /runs/{id}` and the response of every state-changing call.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunView {
    pub schema_version: u32,
    pub run_id: String,
    pub doc_id: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review: Option<ReviewView>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReviewView {
    pub last_seq: u64,
    pub export_version: u64,
    pub dirty: BTreeSet<DerivedStage>,
    pub waived: BTreeSet<ReviewStage>,
    pub counts: BTreeMap<ReviewStage, TaskCounts>,
    pub record: ExtractionRecord,
}

fn view(meta: &RunMeta, state: Option<&RunState>) -> RunView {
    RunView {
        schema_version: SCHEMA_VERSION,
        run_id: meta.run_id.clone(),
        doc_id: meta.doc_id.clone(),
        status: meta.status,
        error: meta.error.clone(),
        review: state.map(|s| ReviewView {
            last_seq: s.last_seq(),
            export_version: s.export_version,
            dirty: s.dirty.clone(),
            waived: s.waived.clone(),
            counts: s.counts(),
            record: s.record.clone(),
        }),
    }
}

async fn state_view(store: Arc<RunStore>, state: RunState) -> ApiResult<Json<RunView>> {
    let id = state.run_id.clone();
    let meta = blocking(move || store.meta(&id)).await?;
    Ok(Json(view(&meta, Some(&state))))
}

async fn get_run(State(store): State<Arc<RunStore>>, Path(id): Path<String>) -> ApiResult<Json<RunView>> {
    let (meta, state) = blocking(move || {
        let meta = store.meta(&id)?;
        let state = match store.state(&id) {
            Ok(s) => Some(s),
            Err(CurationError::NotReady(_)) => None,
            Err(e) => return Err(e),
        };
        Ok((meta, state))
    })
    .await?;
    Ok(Json(view(&meta, state.as_ref())))
}

#[derive(Debug, Deserialize)]
pub struct StageQuery {
    #[serde(default)]
    pub stage: Option<String>,
}

async fn list_tasks(
    State(store): State<Arc<RunStore>>,
    Path(id): Path<String>,
    Query(q): Query<StageQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    let stage = q.stage.filter(|s| !s.is_empty()).map(|s| s.parse::<ReviewStage>()).transpose().map_err(bad_request)?;
    let state = blocking(move || store.state(&id)).await?;
    let tasks: Vec<ReviewTask> = state.list_tasks(stage).into_iter().cloned().collect();
    let mut counts = TaskCounts::default();
    for t in &tasks {
        counts.total += 1;
        match t.status {
            TaskStatus::Pending => counts.pending += 1,
            TaskStatus::Accepted => counts.accepted += 1,
            TaskStatus::Edited => counts.edited += 1,
            TaskStatus::Rejected => counts.rejected += 1,
        }
    }
    Ok(Json(json!({"schema_version": SCHEMA_VERSION, "run_id": state.run_id, "stage": stage, "counts": counts, "tasks": tasks})))
}

#[derive(Debug, Deserialize)]
pub struct DecisionRequest {
    #[serde(default)]
    pub schema_version: Option<u32>,
    #[serde(flatten)]
    pub decision: Decision,
}

async fn decide(
    State(store): State<Arc<RunStore>>,
    Path(task): Path<String>,
    headers: HeaderMap,
    Json(req): Json<DecisionRequest>,
) -> ApiResult<Json<RunView>> {
    check_version(req.schema_version)?;
    let who = editor(&headers)?;
    let s = store.clone();
    let state = blocking(move || s.decide(&task, &who, req.decision)).await?;
    state_view(store, state).await
}

async fn recompute(State(store): State<Arc<RunStore>>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Json<RunView>> {
    let who = editor(&headers)?;
    let s = store.clone();
    let state = blocking(move || s.recompute(&id, &who)).await?;
    state_view(store, state).await
}

#[derive(Debug, Deserialize)]
pub struct ExportQuery {
    #[serde(default)]
    pub format: Option<String>,
}

async fn export(State(store): State<Arc<RunStore>>, Path(id): Path<String>, Query(q): Query<ExportQuery>) -> ApiResult<Response> {
    let bundle = blocking(move || store.state(&id)?.export()).await?;
    match q.format.as_deref().unwrap_or("json") {
        "json" => Ok(([(header::CONTENT_TYPE, "application/json")], bundle.to_bytes()).into_response()),
        "jsonl" => Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], bundle.triplets_jsonl()).into_response()),
        other => Err(bad_request(format!("unknown export format {other}; use json or jsonl"))),
    }
}

async fn page_image(State(store): State<Arc<RunStore>>, Path((id, n)): Path<(String, u32)>) -> ApiResult<Response> {
    let svg = blocking(move || page_svg(&store.state(&id)?, n)).await?;
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response())
}

#[derive(Debug, Deserialize)]
pub struct AnnotationQuery {
    pub query_smiles: String,
}

async fn annotation(
    State(store): State<Arc<RunStore>>,
    Path(id): Path<String>,
    Query(q): Query<AnnotationQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    let state = blocking(move || store.state(&id)).await?;
    let candidates: Vec<AnnotationCandidate> =
        rank_for_annotation(&state.record.triplets, &q.query_smiles, &FingerprintParams::default())
            .map_err(|e| ApiError::from(CurationError::InvalidPayload(format!("query_smiles: {e}"))))?;
    Ok(Json(json!({"schema_version": SCHEMA_VERSION, "query_smiles": q.query_smiles, "candidates": candidates})))
}

#[derive(Debug, Deserialize)]
pub struct PreviewRequest {
    #[serde(default)]
    pub schema_version: Option<u32>,
    /// Detection id of the scaffold.
    pub scaffold: usize,
    /// Table to enumerate instead of the stored one.
    #[serde(default)]
    pub table: Option<RGroupTable>,
    #[serde(default)]
    pub cells: Vec<CellEdit>,
}

async fn preview_markush(
    State(store): State<Arc<RunStore>>,
    Path(id): Path<String>,
    Json(req): Json<PreviewRequest>,
) -> ApiResult<Json<serde_json::Value>> {
    check_version(req.schema_version)?;
    let scaffold = req.scaffold;
    let rows: Vec<PreviewRow> = blocking(move || store.state(&id)?.preview_markush(req.scaffold, req.table, &req.cells)).await?;
    Ok(Json(json!({"schema_version": SCHEMA_VERSION, "scaffold": scaffold, "rows": rows})))
}

#[derive(Debug, Deserialize)]
pub struct InsertRequest {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub stage: ReviewStage,
    pub payload: serde_json::Value,
}

async fn insert(
    State(store): State<Arc<RunStore>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(req): Json<InsertRequest>,
) -> ApiResult<Json<RunView>> {
    check_version(req.schema_version)?;
    let who = editor(&headers)?;
    let s = store.clone();
    let state = blocking(move || s.submit(&id, &who, Action::Insert { stage: req.stage, payload: req.payload })).await?;
    state_view(store, state).await
}

#[derive(Debug, Deserialize)]
pub struct WaiveRequest {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub stage: ReviewStage,
}

async fn waive(
    State(store): State<Arc<RunStore>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(req): Json<WaiveRequest>,
) -> ApiResult<Json<RunView>> {
    check_version(req.schema_version)?;
    let who = editor(&headers)?;
    let s = store.clone();
    let state = blocking(move || s.submit(&id, &who, Action::Waive { stage: req.stage })).await?;
    state_view(store, state).await
}

/// Serves the API until the process is stopped.
pub async fn serve(store: Arc<RunStore>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("curation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store)).await
}
