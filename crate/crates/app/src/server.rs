//! HTTP session service: the human-gated propose, review, accept loop.
//!
//! One project per process. Sessions hold at most one open proposal; the
//! model changes only when a ready proposal is accepted, and every
//! mutation to a session runs under that session's gate. Proposals are
//! computed off the request path; clients poll for the result.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gaia_core::classify::ClassificationTable;
use gaia_core::eval::{Averaging, EvalError, EvalSettings, LabelSpace};
use gaia_core::gaia::{
    propose, proposal_record, BackendKind, DesignBackend, DispatchError, Proposal, ProposeError,
    ProposeOptions, PromptTemplate,
};
use gaia_core::model::{BuildingModel, SpaceRef};
use gaia_core::project::save_project;
use gaia_core::rules::RuleTable;
use gaia_core::session_log::{LogEntry, LogError, LogKind};
use gaia_core::xml::{apply_changeset, ApplyError, ChangePolicy};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::backends::BackendChoice;
use crate::jobs::{eval_summary, run_eval, task_payload, EvalJob, JobError, LogSink};

pub const REQUEST_ID_HEADER: &str = "x-request-id";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub project_path: PathBuf,
    pub log_path: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub eval_dir: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub template: PromptTemplate,
    pub rules: RuleTable,
    pub classes: ClassificationTable,
    pub space: LabelSpace,
}

impl ServiceConfig {
    pub fn new(project_path: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            project_path: project_path.into(),
            log_path: None,
            replay: None,
            eval_dir: PathBuf::from("."),
            static_dir: None,
            template: PromptTemplate::default(),
            rules: RuleTable::default(),
            classes: ClassificationTable::default(),
            space: LabelSpace::default(),
        }
    }
}

/// Builds a backend for a request. Replaceable so tests can inject slow or
/// scripted backends.
pub type BackendFactory =
    Arc<dyn Fn(&BackendChoice) -> Result<Box<dyn DesignBackend>, DispatchError> + Send + Sync>;

#[derive(Clone)]
enum ProposalStatus {
    Pending,
    Ready(Arc<Proposal>),
    Failed(ProposeError),
}

struct OpenProposal {
    id: String,
    task: String,
    iteration: u32,
    backend: String,
    status: ProposalStatus,
}

#[derive(Default)]
struct SessionState {
    history: Vec<LogEntry>,
    open: Option<OpenProposal>,
    iterations: HashMap<String, u32>,
}

struct Session {
    id: String,
    created_ms: u64,
    gate: tokio::sync::Mutex<SessionState>,
}

struct ModelState {
    model: BuildingModel,
    version: u64,
}

struct Inner {
    config: ServiceConfig,
    model: RwLock<ModelState>,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
    log: Option<LogSink>,
    factory: BackendFactory,
    counter: AtomicU64,
    memory_seq: Mutex<(u64, u64)>,
    replies: Mutex<HashMap<String, (StatusCode, Value)>>,
    create_gate: tokio::sync::Mutex<()>,
    eval_gate: tokio::sync::Mutex<()>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl AppState {
    pub fn new(config: ServiceConfig, model: BuildingModel) -> Result<Self, LogError> {
        let classes = config.classes.clone();
        let rules = config.rules.clone();
        let replay = config.replay.clone();
        let factory: BackendFactory = Arc::new(move |choice: &BackendChoice| {
            let mut choice = choice.clone();
            if choice.kind() == BackendKind::Replay && choice.replay.is_none() {
                choice.replay = replay.clone();
            }
            choice.build(&classes, &rules)
        });
        Self::with_factory(config, model, factory)
    }

    pub fn with_factory(
        config: ServiceConfig,
        model: BuildingModel,
        factory: BackendFactory,
    ) -> Result<Self, LogError> {
        let log = config.log_path.as_ref().map(LogSink::open).transpose()?;
        Ok(AppState {
            inner: Arc::new(Inner {
                config,
                model: RwLock::new(ModelState { model, version: 0 }),
                sessions: Mutex::new(HashMap::new()),
                log,
                factory,
                counter: AtomicU64::new(0),
                memory_seq: Mutex::new((0, 0)),
                replies: Mutex::new(HashMap::new()),
                create_gate: tokio::sync::Mutex::new(()),
                eval_gate: tokio::sync::Mutex::new(()),
            }),
        })
    }

    /// Current model and its version (bumped on every accepted proposal).
    pub fn snapshot(&self) -> (BuildingModel, u64) {
        let m = self.inner.model.read().unwrap_or_else(|e| e.into_inner());
        (m.model.clone(), m.version)
    }

    fn next_id(&self, prefix: &str) -> String {
        let n = self.inner.counter.fetch_add(1, Ordering::SeqCst) + 1;
        format!("{prefix}-{n}")
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.inner
            .sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id:?}")))
    }

    /// Appends to the session log (durably, when one is configured).
    fn append(
        &self,
        session: &str,
        kind: LogKind,
        task: Option<&str>,
        iteration: Option<u32>,
        payload: Value,
    ) -> Result<LogEntry, ApiError> {
        if let Some(log) = &self.inner.log {
            return log
                .record(session, kind, task, iteration, payload)
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e));
        }
        let mut seq = self.inner.memory_seq.lock().unwrap_or_else(|e| e.into_inner());
        seq.0 += 1;
        seq.1 = now_ms().max(seq.1 + 1);
        Ok(LogEntry {
            seq: seq.0,
            timestamp_ms: seq.1,
            session: session.to_string(),
            kind,
            task: task.map(str::to_string),
            iteration,
            payload,
        })
    }

    fn cached(&self, key: &Option<String>) -> Option<Response> {
        let key = key.as_ref()?;
        let replies = self.inner.replies.lock().unwrap_or_else(|e| e.into_inner());
        replies
            .get(key)
            .map(|(status, body)| (*status, Json(body.clone())).into_response())
    }

    fn remember(&self, key: &Option<String>, status: StatusCode, body: Value) -> Response {
        if let Some(key) = key {
            self.inner
                .replies
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .insert(key.clone(), (status, body.clone()));
        }
        (status, Json(body)).into_response()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    stage: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl std::fmt::Display) -> Self {
        ApiError {
            status,
            message: message.to_string(),
            stage: None,
        }
    }

    fn body(&self) -> Value {
        match &self.stage {
            Some(stage) => json!({ "error": self.message, "stage": stage }),
            None => json!({ "error": self.message }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body())).into_response()
    }
}

fn request_key(headers: &HeaderMap, route: &str) -> Option<String> {
    headers
        .get(REQUEST_ID_HEADER)
        .and_then(|v| v.to_str().ok())
        .filter(|v| !v.is_empty())
        .map(|v| format!("{route}\n{v}"))
}

/// Finishes a mutation: caches the outcome (success or error) under the
/// request id so a retry gets the same answer.
fn settle(state: &AppState, key: &Option<String>, result: Result<(StatusCode, Value), ApiError>) -> Response {
    match result {
        Ok((status, body)) => state.remember(key, status, body),
        Err(e) => {
            let body = e.body();
            state.remember(key, e.status, body)
        }
    }
}

pub fn router(state: AppState) -> Router {
    let static_dir = state.inner.config.static_dir.clone();
    let router = Router::new()
        .route("/api/model", get(get_model))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/task", post(submit_task))
        .route("/api/sessions/{id}/proposal", get(get_proposal))
        .route("/api/sessions/{id}/decision", post(decide))
        .route("/api/eval", post(run_evaluation))
        .with_state(state);
    match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

/// Model document for viewers: geometry, current types, side names and
/// the label order used for colors.
pub fn model_document(model: &BuildingModel, version: u64, config: &ServiceConfig) -> Value {
    let side = |s: &SpaceRef| model.space_name(s).unwrap_or_default().to_string();
    json!({
        "name": model.name,
        "units": model.units,
        "version": version,
        "levels": model.levels,
        "rooms": model.rooms.iter().map(|r| json!({
            "id": r.id,
            "name": r.name,
            "level": r.level,
            "class": config.classes.classify_name(&r.name).ok(),
            "polygon": r.polygon.iter().map(|p| [p.0, p.1]).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "walls": model.walls.iter().map(|w| json!({
            "id": w.id,
            "level": w.level,
            "start": [w.start.0, w.start.1],
            "end": [w.end.0, w.end.1],
            "type": w.type_name,
            "sideA": side(&w.side_a),
            "sideB": side(&w.side_b),
        })).collect::<Vec<_>>(),
        "library": model.library,
        "labels": config.space.labels(),
    })
}

async fn get_model(State(state): State<AppState>) -> Json<Value> {
    let (model, version) = state.snapshot();
    Json(model_document(&model, version, &state.inner.config))
}

async fn create_session(State(state): State<AppState>, headers: HeaderMap) -> Response {
    let key = request_key(&headers, "POST /api/sessions");
    let _gate = state.inner.create_gate.lock().await;
    if let Some(r) = state.cached(&key) {
        return r;
    }
    let id = state.next_id("s");
    let session = Arc::new(Session {
        id: id.clone(),
        created_ms: now_ms(),
        gate: tokio::sync::Mutex::new(SessionState::default()),
    });
    state
        .inner
        .sessions
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .insert(id.clone(), session);
    state.remember(&key, StatusCode::CREATED, json!({ "session_id": id }))
}

fn status_name(s: &ProposalStatus) -> &'static str {
    match s {
        ProposalStatus::Pending => "pending",
        ProposalStatus::Ready(_) => "ready",
        ProposalStatus::Failed(_) => "error",
    }
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let session = state.session(&id)?;
    let st = session.gate.lock().await;
    let (phase, proposal_id) = match &st.open {
        None => ("idle", None),
        Some(p) => (status_name(&p.status), Some(p.id.clone())),
    };
    Ok(Json(json!({
        "session_id": session.id,
        "created_ms": session.created_ms,
        "state": phase,
        "proposal_id": proposal_id,
        "history": st.history,
    })))
}

#[derive(Debug, Deserialize)]
struct TaskRequest {
    task: String,
    #[serde(default)]
    backend: Option<String>,
    #[serde(default)]
    walls: Option<Vec<String>>,
    #[serde(default)]
    policy: Option<ChangePolicy>,
    #[serde(default)]
    model: Option<String>,
    #[serde(default)]
    temperature: Option<f64>,
}

fn parse_backend(name: &Option<String>) -> Result<BackendChoice, ApiError> {
    let kind = match name {
        None => BackendKind::Rule,
        Some(n) => n
            .parse::<BackendKind>()
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e))?,
    };
    Ok(BackendChoice {
        kind: Some(kind),
        ..BackendChoice::default()
    })
}

async fn submit_task(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<TaskRequest>, axum::extract::rejection::JsonRejection>,
) -> Response {
    let key = request_key(&headers, &format!("POST /api/sessions/{id}/task"));
    let session = match state.session(&id) {
        Ok(s) => s,
        Err(e) => return e.into_response(),
    };
    let mut st = session.gate.lock().await;
    if let Some(r) = state.cached(&key) {
        return r;
    }
    let result = start_proposal(&state, &session, &mut st, body);
    settle(&state, &key, result)
}

fn start_proposal(
    state: &AppState,
    session: &Arc<Session>,
    st: &mut SessionState,
    body: Result<Json<TaskRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<(StatusCode, Value), ApiError> {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    if let Some(open) = &st.open {
        if !matches!(open.status, ProposalStatus::Failed(_)) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("proposal {} is {}; decide it first", open.id, status_name(&open.status)),
            ));
        }
    }
    let mut choice = parse_backend(&req.backend)?;
    choice.model = req.model.clone();
    choice.temperature = req.temperature;
    let task = req.task.trim().to_string();
    let iteration = {
        let n = st.iterations.entry(task.clone()).or_insert(0);
        *n += 1;
        *n
    };
    let proposal_id = state.next_id("p");
    let (model, _) = state.snapshot();
    let selection = req.walls.clone().unwrap_or_else(|| model.wall_ids());
    let entry = state.append(
        &session.id,
        LogKind::TaskSubmitted,
        Some(&task),
        Some(iteration),
        {
            let mut p = task_payload(choice.kind().as_str(), selection.len());
            p["proposal_id"] = json!(proposal_id);
            p
        },
    )?;
    st.history.push(entry);
    st.open = Some(OpenProposal {
        id: proposal_id.clone(),
        task: task.clone(),
        iteration,
        backend: choice.kind().as_str().to_string(),
        status: ProposalStatus::Pending,
    });

    let options = ProposeOptions {
        policy: req.policy.unwrap_or_default(),
        template: state.inner.config.template.clone(),
        params: choice.config().params,
        iteration,
    };
    let worker_state = state.clone();
    let worker_session = session.clone();
    let worker_id = proposal_id.clone();
    tokio::task::spawn_blocking(move || {
        let (tag, outcome) = match (worker_state.inner.factory)(&choice) {
            Ok(backend) => (
                backend.tag(),
                propose(&model, &selection, &task, backend.as_ref(), &options),
            ),
            Err(e) => (choice.kind().as_str().to_string(), Err(ProposeError::from(e))),
        };
        let payload = {
            let mut v = serde_json::to_value(proposal_record(&tag, &outcome)).unwrap_or_default();
            v["proposal_id"] = json!(worker_id);
            v
        };
        let mut st = worker_session.gate.blocking_lock();
        let logged = worker_state.append(
            &worker_session.id,
            LogKind::ProposalReceived,
            Some(&task),
            Some(iteration),
            payload,
        );
        let status = match (logged, outcome) {
            (Err(e), _) => ProposalStatus::Failed(ProposeError::new(
                gaia_core::gaia::Stage::Dispatch,
                format!("session log: {}", e.message),
            )),
            (Ok(entry), outcome) => {
                st.history.push(entry);
                match outcome {
                    Ok(p) => ProposalStatus::Ready(Arc::new(p)),
                    Err(e) => ProposalStatus::Failed(e),
                }
            }
        };
        if let Some(open) = st.open.as_mut().filter(|o| o.id == worker_id) {
            open.backend = tag;
            open.status = status;
        }
    });

    Ok((
        StatusCode::ACCEPTED,
        json!({ "proposal_id": proposal_id, "iteration": iteration }),
    ))
}

async fn get_proposal(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let session = state.session(&id)?;
    let st = session.gate.lock().await;
    let open = st
        .open
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no open proposal"))?;
    let mut body = json!({
        "proposal_id": open.id,
        "status": status_name(&open.status),
        "task": open.task,
        "iteration": open.iteration,
        "backend": open.backend,
    });
    match &open.status {
        ProposalStatus::Pending => {}
        ProposalStatus::Ready(p) => {
            body["changeset"] = json!(p.changeset);
            body["validation"] = json!(p.validation);
            body["raw_response"] = json!(p.raw_response);
        }
        ProposalStatus::Failed(e) => {
            body["error"] = json!({ "stage": e.stage, "message": e.message });
            body["raw_response"] = json!(e.raw_response);
        }
    }
    Ok(Json(body))
}

#[derive(Debug, Deserialize)]
struct DecisionRequest {
    accept: bool,
}

async fn decide(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<DecisionRequest>, axum::extract::rejection::JsonRejection>,
) -> Response {
    let key = request_key(&headers, &format!("POST /api/sessions/{id}/decision"));
    let session = match state.session(&id) {
        Ok(s) => s,
        Err(e) => return e.into_response(),
    };
    let mut st = session.gate.lock().await;
    if let Some(r) = state.cached(&key) {
        return r;
    }
    let result = apply_decision(&state, &session, &mut st, body);
    settle(&state, &key, result)
}

fn apply_decision(
    state: &AppState,
    session: &Session,
    st: &mut SessionState,
    body: Result<Json<DecisionRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<(StatusCode, Value), ApiError> {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    let open = st
        .open
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no proposal to decide"))?;
    let proposal = match &open.status {
        ProposalStatus::Pending => {
            return Err(ApiError::new(StatusCode::CONFLICT, "proposal is still pending"))
        }
        ProposalStatus::Failed(e) if req.accept => {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("cannot accept a failed proposal: {e}"),
            ))
        }
        ProposalStatus::Failed(_) => None,
        ProposalStatus::Ready(p) => Some(p.clone()),
    };
    let (proposal_id, task, iteration) = (open.id.clone(), open.task.clone(), open.iteration);

    if !req.accept {
        let entry = state.append(
            &session.id,
            LogKind::Rejected,
            Some(&task),
            Some(iteration),
            json!({ "proposal_id": proposal_id }),
        )?;
        st.history.push(entry);
        st.open = None;
        return Ok((StatusCode::OK, json!({ "status": "rejected", "proposal_id": proposal_id })));
    }

    let proposal = proposal.expect("ready");
    let mut guard = state.inner.model.write().unwrap_or_else(|e| e.into_inner());
    let updated = apply_changeset(&guard.model, &proposal.changeset).map_err(|e| match e {
        ApplyError::Conflict { .. } => ApiError::new(StatusCode::CONFLICT, format!("stale proposal: {e}")),
        other => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, other),
    })?;
    save_project(&updated, &state.inner.config.project_path)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    guard.model = updated;
    guard.version += 1;
    let version = guard.version;
    drop(guard);
    let applied = proposal.changeset.changes.len();
    let entry = state.append(
        &session.id,
        LogKind::Accepted,
        Some(&task),
        Some(iteration),
        json!({ "proposal_id": proposal_id, "applied": applied, "version": version }),
    )?;
    st.history.push(entry);
    st.open = None;
    Ok((
        StatusCode::OK,
        json!({ "status": "accepted", "proposal_id": proposal_id, "applied": applied, "version": version }),
    ))
}

#[derive(Debug, Deserialize)]
struct EvalRequest {
    task: String,
    #[serde(default)]
    backend: Option<String>,
    #[serde(default = "default_iterations")]
    iterations: usize,
    #[serde(default)]
    averaging: Option<Averaging>,
    #[serde(default)]
    policy: Option<ChangePolicy>,
}

fn default_iterations() -> usize {
    5
}

async fn run_evaluation(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Result<Json<EvalRequest>, axum::extract::rejection::JsonRejection>,
) -> Response {
    let key = request_key(&headers, "POST /api/eval");
    let _gate = state.inner.eval_gate.lock().await;
    if let Some(r) = state.cached(&key) {
        return r;
    }
    let worker = state.clone();
    let result = match tokio::task::spawn_blocking(move || evaluation_job(&worker, body)).await {
        Ok(r) => r,
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e)),
    };
    settle(&state, &key, result)
}

fn evaluation_job(
    state: &AppState,
    body: Result<Json<EvalRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<(StatusCode, Value), ApiError> {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    if req.iterations == 0 {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "iterations must be at least 1"));
    }
    let choice = parse_backend(&req.backend)?;
    let config = &state.inner.config;
    let backend = (state.inner.factory)(&choice).map_err(|e| {
        let e = ProposeError::from(e);
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message: e.message.clone(),
            stage: Some(e.stage.to_string()),
        }
    })?;
    let (model, _) = state.snapshot();
    let eval_id = state.next_id("eval");
    let job = EvalJob {
        model: &model,
        selection: model.wall_ids(),
        task: req.task.clone(),
        backend: backend.as_ref(),
        iterations: req.iterations,
        averaging: req.averaging.unwrap_or_default(),
        settings: EvalSettings {
            classes: config.classes.clone(),
            rules: config.rules.clone(),
            options: ProposeOptions {
                policy: req.policy.unwrap_or_default(),
                template: config.template.clone(),
                params: choice.config().params,
                iteration: 1,
            },
        },
        space: config.space.clone(),
        session: eval_id.clone(),
    };
    let output = run_eval(&job, state.inner.log.as_ref()).map_err(|e| match e {
        JobError::Eval(EvalError::Backend { iteration, error }) => ApiError {
            status: StatusCode::BAD_GATEWAY,
            message: format!("iteration {iteration}: {}", error.message),
            stage: Some(error.stage.to_string()),
        },
        JobError::Eval(other) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, other),
        JobError::Log(e) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e),
    })?;
    let csv_path = config.eval_dir.join(format!("{eval_id}-predictions.csv"));
    let report_path = config.eval_dir.join(format!("{eval_id}-report.txt"));
    let write = |p: &PathBuf, text: &str| {
        std::fs::write(p, text).map_err(|e| {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("{}: {e}", p.display()))
        })
    };
    write(&csv_path, &output.table.to_csv_string())?;
    write(&report_path, &output.report)?;
    let summary = eval_summary(&output, &backend.tag(), &csv_path, &report_path);
    state.append(&eval_id, LogKind::EvalRun, Some(req.task.trim()), None, summary.clone())?;
    Ok((
        StatusCode::OK,
        json!({
            "eval_id": eval_id,
            "csv_path": csv_path.display().to_string(),
            "report_path": report_path.display().to_string(),
            "report": output.report,
            "summary": summary,
            "metrics": output.evaluation.metrics,
            "confusion": output.evaluation.confusion,
            "kappa": output.evaluation.kappa,
        }),
    ))
}

/// A service running on its own thread, for embedding and tests.
pub struct RunningServer {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningServer {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds `addr` (port 0 picks a free port) and serves until dropped.
pub fn start_background(state: AppState, addr: SocketAddr) -> std::io::Result<RunningServer> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            let _ = axum::serve(listener, router(state))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(RunningServer {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
