//! HTTP API over a [`Project`].
//!
//! Reads share a lock; mutations take it exclusively, one at a time. At most
//! one labeling run executes in the background, and `GET /runs/{id}` reads its
//! live progress without touching the project lock.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use vidrules_core::matcher::CompiledState;
use vidrules_core::rules::{has_errors, parse_events, validate_event, Severity};
use vidrules_core::{KeyEvent, RuleDiagnostic, StateDef};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::project::{validate_all, Project, ProjectError};
use crate::run::{evaluate_run, execute, finished_run, prepare_run, run_labels, EvalError, RunHandle, STATS_FILE};

#[derive(Clone)]
pub struct AppState {
    project: Arc<RwLock<Project>>,
    runs: Arc<Mutex<BTreeMap<u32, Arc<RunHandle>>>>,
    active: Arc<Mutex<Option<u32>>>,
}

impl AppState {
    pub fn new(project: Project) -> Self {
        AppState {
            project: Arc::new(RwLock::new(project)),
            runs: Arc::default(),
            active: Arc::default(),
        }
    }

    /// Shared handle to the project, e.g. to inspect it after requests.
    pub fn project(&self) -> Arc<RwLock<Project>> {
        self.project.clone()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl std::fmt::Display) -> Self {
        ApiError { status, body: json!({ "error": message.to_string() }) }
    }

    fn not_found(what: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{what} not found"))
    }

    fn diagnostics(diags: Vec<RuleDiagnostic>) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({ "error": "invalid rules", "diagnostics": diags }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        match e {
            ProjectError::RuleErrors(d) => ApiError::diagnostics(d),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other),
        }
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnknownRun(id) => ApiError::not_found(format!("run {id}")),
            EvalError::NotDone(_) => ApiError::new(StatusCode::CONFLICT, e),
            EvalError::Project(p) => p.into(),
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn blocking_failed(e: tokio::task::JoinError) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/videos", get(list_videos))
        .route("/videos/{id}/frames/{n}", get(frame_image))
        .route("/videos/{id}/elements/{n}", get(frame_elements))
        .route("/events", get(get_events).put(put_events).post(put_events))
        .route("/events/validate", post(validate_events))
        .route("/runs", post(start_run))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/labels", get(get_labels))
        .route("/runs/{id}/stats", get(get_stats))
        .route("/match/preview", post(match_preview))
        .route("/evaluate", post(evaluate))
        .with_state(state)
}

/// Serves `project` on `addr` until the process is stopped.
pub async fn serve(project: Project, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(AppState::new(project))).await
}

async fn list_videos(State(s): State<AppState>) -> Json<Value> {
    let p = s.project.read().unwrap();
    let videos: Vec<Value> = p
        .manifest
        .videos
        .iter()
        .map(|v| {
            json!({
                "video_id": v.video_id,
                "fps": v.fps,
                "frame_count": v.frame_count,
                "has_frames": p.frames_dir(&v.video_id).is_some(),
            })
        })
        .collect();
    Json(Value::Array(videos))
}

async fn frame_image(State(s): State<AppState>, Path((id, n)): Path<(String, u32)>) -> ApiResult<Response> {
    let dir = s.project.read().unwrap().frames_dir(&id).ok_or_else(|| ApiError::not_found(format!("frames of `{id}`")))?;
    let bytes = tokio::fs::read(dir.join(format!("{n}.jpg")))
        .await
        .map_err(|_| ApiError::not_found(format!("frame {n} of `{id}`")))?;
    Ok(([(header::CONTENT_TYPE, "image/jpeg")], bytes).into_response())
}

async fn frame_elements(State(s): State<AppState>, Path((id, n)): Path<(String, u32)>) -> ApiResult<Json<Value>> {
    let project = s.project.clone();
    let g = tokio::task::spawn_blocking(move || project.read().unwrap().frame_graph(&id, n).map(|g| (id, g)))
        .await
        .map_err(blocking_failed)??;
    match g {
        (_, Some(g)) => Ok(Json(serde_json::to_value(g).expect("graph serializes"))),
        (id, None) => Err(ApiError::not_found(format!("frame {n} of `{id}`"))),
    }
}

#[derive(Deserialize)]
struct FormatQuery {
    format: Option<String>,
}

fn wants_text(headers: &HeaderMap, q: &FormatQuery) -> bool {
    match q.format.as_deref() {
        Some(f) => f == "dsl",
        None => headers
            .get(header::ACCEPT)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|a| a.starts_with("text/")),
    }
}

async fn get_events(State(s): State<AppState>, headers: HeaderMap, Query(q): Query<FormatQuery>) -> Response {
    let p = s.project.read().unwrap();
    let dsl = p.rules_source().unwrap_or_default();
    if wants_text(&headers, &q) {
        return ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], dsl).into_response();
    }
    Json(json!({
        "events": p.events,
        "dsl": dsl,
        "diagnostics": p.diagnostics,
        "read_only": p.is_read_only(),
    }))
    .into_response()
}

fn is_json(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|c| c.starts_with("application/json"))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EventsBody {
    List(Vec<KeyEvent>),
    Wrapped { events: Vec<KeyEvent> },
}

/// Parses a request body holding either DSL text or structured events.
/// Parse failures come back as diagnostics.
fn parse_body(headers: &HeaderMap, body: &[u8]) -> Result<Vec<KeyEvent>, Vec<RuleDiagnostic>> {
    if is_json(headers) {
        return match serde_json::from_slice::<EventsBody>(body) {
            Ok(EventsBody::List(e) | EventsBody::Wrapped { events: e }) => Ok(e),
            Err(e) => {
                let mut d = RuleDiagnostic::error("", format!("malformed events JSON: {e}"));
                d.line = Some(e.line() as u32);
                d.column = Some(e.column() as u32);
                Err(vec![d])
            }
        };
    }
    let src = std::str::from_utf8(body).map_err(|_| vec![RuleDiagnostic::error("", "body is not UTF-8")])?;
    parse_events(src).map_err(|e| vec![RuleDiagnostic::from(e)])
}

async fn put_events(State(s): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult<Json<Value>> {
    let events = parse_body(&headers, &body).map_err(ApiError::diagnostics)?;
    let mut p = s.project.write().unwrap();
    let diags = p.set_events(events)?.to_vec();
    Ok(Json(json!({ "events": p.events, "diagnostics": diags })))
}

async fn validate_events(headers: HeaderMap, body: Bytes) -> Json<Value> {
    let diags = match parse_body(&headers, &body) {
        Ok(events) => validate_all(&events),
        Err(d) => d,
    };
    let errors = diags.iter().filter(|d| d.severity == Severity::Error).count();
    Json(json!({ "errors": errors, "warnings": diags.len() - errors, "diagnostics": diags }))
}

#[derive(Deserialize, Default)]
struct RunRequest {
    events: Option<Vec<String>>,
}

async fn start_run(State(s): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: RunRequest = if body.iter().all(u8::is_ascii_whitespace) {
        RunRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e))?
    };

    let plan = {
        let mut active = s.active.lock().unwrap();
        if let Some(id) = *active {
            return Err(ApiError::new(StatusCode::CONFLICT, format!("run {id} is still in progress")));
        }
        let plan = prepare_run(&s.project.read().unwrap(), req.events.as_deref())?;
        *active = Some(plan.handle.run_id());
        plan
    };
    let handle = plan.handle.clone();
    s.runs.lock().unwrap().insert(handle.run_id(), handle.clone());

    let st = s.clone();
    tokio::task::spawn_blocking(move || {
        let record = execute(&plan);
        st.project.write().unwrap().runs.push(record);
        *st.active.lock().unwrap() = None;
    });
    Ok((StatusCode::ACCEPTED, Json(serde_json::to_value(handle.snapshot()).expect("record serializes"))))
}

async fn get_run(State(s): State<AppState>, Path(id): Path<u32>) -> ApiResult<Json<Value>> {
    if let Some(h) = s.runs.lock().unwrap().get(&id) {
        return Ok(Json(serde_json::to_value(h.snapshot()).expect("record serializes")));
    }
    let p = s.project.read().unwrap();
    let r = p.run(id).ok_or_else(|| ApiError::not_found(format!("run {id}")))?;
    Ok(Json(serde_json::to_value(r).expect("record serializes")))
}

#[derive(Deserialize)]
struct LabelsQuery {
    video: Option<String>,
}

async fn get_labels(State(s): State<AppState>, Path(id): Path<u32>, Query(q): Query<LabelsQuery>) -> ApiResult<Json<Value>> {
    let p = s.project.read().unwrap();
    let labels = run_labels(&p, id, q.video.as_deref())?;
    Ok(Json(serde_json::to_value(labels).expect("labels serialize")))
}

async fn get_stats(State(s): State<AppState>, Path(id): Path<u32>) -> ApiResult<Json<Value>> {
    let path = {
        let p = s.project.read().unwrap();
        finished_run(&p, id)?;
        p.run_dir(id).join(STATS_FILE)
    };
    let text = tokio::fs::read_to_string(&path)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    Ok(Json(v))
}

#[derive(Deserialize)]
struct PreviewRequest {
    video: String,
    frame: u32,
    event: Option<String>,
    state: Option<String>,
    state_def: Option<StateDef>,
}

fn preview_state(p: &Project, req: &PreviewRequest) -> ApiResult<StateDef> {
    if let Some(def) = &req.state_def {
        let probe = KeyEvent {
            event_id: "preview".into(),
            action_label: "preview".into(),
            states: vec![def.clone()],
            intervals: vec![],
        };
        let diags = validate_event(&probe);
        if has_errors(&diags) {
            return Err(ApiError::diagnostics(diags));
        }
        return Ok(def.clone());
    }
    let (Some(ev), Some(st)) = (&req.event, &req.state) else {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "give either `state_def` or both `event` and `state`"));
    };
    let event = p.event(ev).ok_or_else(|| ApiError::not_found(format!("event `{ev}`")))?;
    event.state(st).cloned().ok_or_else(|| ApiError::not_found(format!("state `{st}` of `{ev}`")))
}

async fn match_preview(State(s): State<AppState>, Json(req): Json<PreviewRequest>) -> ApiResult<Json<Value>> {
    let project = s.project.clone();
    tokio::task::spawn_blocking(move || {
        let p = project.read().unwrap();
        let state = preview_state(&p, &req)?;
        let g = p
            .frame_graph(&req.video, req.frame)?
            .ok_or_else(|| ApiError::not_found(format!("frame {} of `{}`", req.frame, req.video)))?;
        let cfg = p.manifest.labeling_config();
        let compiled = CompiledState::new(&state);
        let outcome = compiled.search(&g, &cfg.geometry, None, cfg.max_embeddings_per_frame);
        let report = compiled.explain(&g, &cfg.geometry);
        Ok(Json(json!({
            "embeddings": outcome.embeddings,
            "truncated": outcome.truncated,
            "report": report,
        })))
    })
    .await
    .map_err(blocking_failed)?
}

#[derive(Deserialize)]
struct EvaluateRequest {
    run: u32,
    action: Option<String>,
}

async fn evaluate(State(s): State<AppState>, Json(req): Json<EvaluateRequest>) -> ApiResult<Json<Value>> {
    let p = s.project.read().unwrap();
    let m = evaluate_run(&p, req.run, req.action.as_deref())?;
    Ok(Json(serde_json::to_value(m).expect("metrics serialize")))
}
