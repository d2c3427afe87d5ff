//! HTTP API under `/api/v1`.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use crowdscreen_core::config::ProjectConfig;
use crowdscreen_core::crowdsim::VoteSubmission;
use crowdscreen_core::domain::{load_papers, ProjectInputs};
use crowdscreen_core::estimator::{self, CurveReport, SimulationTemplate};
use crowdscreen_core::project::TaskAssignment;
use crowdscreen_core::{Cents, Criterion, CriterionId, Label, Paper, PaperId, ScreeningProject, TestItem, WorkerId};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::ProjectEngine;
use crate::error::ServiceError;
use crate::store::ProjectStore;
use crate::writer::ProjectHandle;

/// Worker pool size assumed when simulating for estimates and curves.
pub const SIMULATED_WORKERS: usize = 50;

pub struct AppState {
    store: ProjectStore,
    projects: Mutex<BTreeMap<String, ProjectHandle>>,
}

impl AppState {
    /// Opens the store and recovers every project in it. Returns recovery warnings.
    pub fn open(store: ProjectStore) -> Result<(Arc<Self>, Vec<String>), ServiceError> {
        let mut projects = BTreeMap::new();
        let mut warnings = Vec::new();
        for id in store.list()? {
            let (engine, report) = ProjectEngine::open(store.clone(), &id)?;
            warnings.extend(report.warning);
            projects.insert(id, ProjectHandle::spawn(engine));
        }
        let state = Arc::new(Self {
            store,
            projects: Mutex::new(projects),
        });
        Ok((state, warnings))
    }

    pub fn handle(&self, id: &str) -> Result<ProjectHandle, ServiceError> {
        self.projects
            .lock()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    fn create(&self, inputs: ProjectInputs, config: ProjectConfig) -> Result<String, ServiceError> {
        let mut projects = self.projects.lock().expect("registry lock");
        let id = self.store.next_id()?;
        let engine = ProjectEngine::create(self.store.clone(), &id, inputs, config)?;
        projects.insert(id.clone(), ProjectHandle::spawn(engine));
        Ok(id)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/projects", post(create_project).get(list_projects))
        .route("/projects/{id}/estimate", get(estimate))
        .route("/projects/{id}/initial-run", post(initial_run))
        .route("/projects/{id}/step", post(step))
        .route("/projects/{id}/stop", post(stop))
        .route("/projects/{id}/workers", post(register_worker))
        .route("/projects/{id}/status", get(status))
        .route("/projects/{id}/curves", get(curves))
        .route("/projects/{id}/export", get(export))
        .route("/projects/{id}/tasks/next", get(next_task))
        .route("/projects/{id}/votes", post(submit_vote));
    Router::new().nest("/api/v1", api).with_state(state)
}

pub struct ApiError(ServiceError);

impl<E: Into<ServiceError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let mut body = json!({ "error": self.0.kind(), "message": self.0.to_string() });
        if let ServiceError::Validation(v) = &self.0 {
            body["detail"] = validation_detail(v);
        }
        (status, Json(body)).into_response()
    }
}

fn validation_detail(e: &crowdscreen_core::ValidationError) -> serde_json::Value {
    use crowdscreen_core::ValidationError as V;
    match e {
        V::Row { row, reason } => json!({ "document": "papers", "row": row, "reason": reason }),
        V::Field { document, index, reason } => json!({ "document": document, "index": index, "reason": reason }),
        V::TooFewTestItems { min, got } => json!({ "document": "tests", "min": min, "got": got }),
        V::Malformed { document, reason } => json!({ "document": document, "reason": reason }),
        V::MissingHeader => json!({ "document": "papers", "row": 1, "reason": "missing header" }),
        V::Config(reason) => json!({ "document": "config", "reason": reason }),
    }
}

type ApiResult = Result<Response, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let bytes: &[u8] = if body.is_empty() { b"{}" } else { body };
    serde_json::from_slice(bytes).map_err(|e| ApiError(ServiceError::BadRequest(e.to_string())))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PapersInput {
    Csv(String),
    Rows(Vec<Paper>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateProject {
    papers: PapersInput,
    criteria: Vec<Criterion>,
    tests: Vec<TestItem>,
    #[serde(default)]
    config: Option<serde_json::Value>,
}

#[derive(Serialize)]
struct Created {
    project_id: String,
}

async fn create_project(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: CreateProject = parse_body(&body)?;
    let papers = match req.papers {
        PapersInput::Csv(text) => load_papers(&text)?,
        PapersInput::Rows(rows) => rows,
    };
    let config = match req.config {
        Some(value) => ProjectConfig::from_json(&value.to_string())?,
        None => ProjectConfig::default(),
    };
    let inputs = ProjectInputs::new(papers, req.criteria, req.tests)?;
    let id = tokio::task::spawn_blocking(move || state.create(inputs, config))
        .await
        .map_err(|_| ServiceError::Unavailable)??;
    Ok((StatusCode::CREATED, Json(Created { project_id: id })).into_response())
}

async fn list_projects(State(state): State<Arc<AppState>>) -> ApiResult {
    let ids: Vec<String> = state.projects.lock().expect("registry lock").keys().cloned().collect();
    Ok(Json(json!({ "projects": ids })).into_response())
}

/// Cost projection in the shape `GET /estimate` returns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub criteria: usize,
    pub initial_run_cents_per_criterion: Cents,
    pub initial_run_cents: Cents,
    pub projected_adaptive_cents: Cents,
    pub total_cents: Cents,
    pub total: String,
    pub trials: u32,
}

/// Initial-run cost for every criterion plus the adaptive spend projected by
/// simulation from the historical priors.
pub fn compute_estimate(project: &ScreeningProject, trials: u32, seed: u64) -> Result<Estimate, ServiceError> {
    let papers = project.inputs().papers.len();
    let criteria = project.inputs().criteria.len();
    let strategy = &project.config().strategy;
    let per_criterion = strategy.initial_run_cost(papers, 1);
    let initial = per_criterion * criteria as u64;
    let template = SimulationTemplate::new(project.inputs().clone(), project.config().clone());
    let adaptive = estimator::projected_adaptive_cost(&template, trials, seed)?;
    let total = initial + adaptive;
    Ok(Estimate {
        criteria,
        initial_run_cents_per_criterion: per_criterion,
        initial_run_cents: initial,
        projected_adaptive_cents: adaptive,
        total_cents: total,
        total: total.dollars_string(),
        trials: trials.max(1),
    })
}

fn query_u64(q: &HashMap<String, String>, key: &str, default: u64) -> Result<u64, ApiError> {
    match q.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| ApiError(ServiceError::BadRequest(format!("{key} must be a non-negative integer")))),
    }
}

async fn estimate(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let view = state.handle(&id)?.view();
    let trials = query_u64(&q, "trials", 10)? as u32;
    let seed = query_u64(&q, "seed", 0)?;
    let estimate = tokio::task::spawn_blocking(move || compute_estimate(&view, trials, seed))
        .await
        .map_err(|_| ServiceError::Unavailable)??;
    Ok(Json(estimate).into_response())
}

/// Curve parameters shared by the HTTP endpoint and the CLI.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRequest {
    pub algorithms: Vec<estimator::Algorithm>,
    pub trials: u32,
    pub checkpoints: Option<Vec<u64>>,
    pub seed: u64,
}

/// Simulated curves from the project's current estimates (historical
/// defaults before the initial run).
pub fn compute_curves(project: &ScreeningProject, req: &CurveRequest) -> Result<CurveReport, ServiceError> {
    let template = SimulationTemplate::from_project(project);
    let crowd = template.default_crowd(SIMULATED_WORKERS, req.seed);
    let checkpoints = match &req.checkpoints {
        Some(c) => c.clone(),
        None => {
            let s = &project.config().strategy;
            let full = u64::from(s.baseline_votes)
                * project.inputs().papers.len() as u64
                * project.inputs().criteria.len() as u64;
            estimator::default_checkpoints(full * 3 / 2, 6)
        }
    };
    let points = estimator::simulate_curves(&template, &crowd, &req.algorithms, &checkpoints, req.trials, req.seed)?;
    Ok(CurveReport::new(points))
}

async fn curves(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let view = state.handle(&id)?.view();
    let default_algorithms = format!("shortest_run,fixed_j:{}", view.config().strategy.baseline_votes);
    let algorithms = estimator::parse_algorithms(q.get("algorithms").unwrap_or(&default_algorithms))?;
    let checkpoints = match q.get("checkpoints") {
        Some(list) => Some(
            list.split(',')
                .map(|c| c.trim().parse::<u64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| ServiceError::BadRequest("checkpoints must be integers".into()))?,
        ),
        None => None,
    };
    let req = CurveRequest {
        algorithms,
        trials: query_u64(&q, "trials", 20)? as u32,
        checkpoints,
        seed: query_u64(&q, "seed", 0)?,
    };
    let report = tokio::task::spawn_blocking(move || compute_curves(&view, &req))
        .await
        .map_err(|_| ServiceError::Unavailable)??;
    Ok(Json(report).into_response())
}

#[derive(Deserialize)]
struct InitialRunBody {
    #[serde(default)]
    seed: u64,
}

async fn initial_run(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let handle = state.handle(&id)?;
    let req: InitialRunBody = parse_body(&body)?;
    let requests = handle.start_initial_run(req.seed).await?;
    let view = handle.view();
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "phase": view.phase(), "requests": requests.len() })),
    )
        .into_response())
}

#[derive(Deserialize)]
struct StepBody {
    vote_budget: u64,
}

async fn step(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let handle = state.handle(&id)?;
    let req: StepBody = parse_body(&body)?;
    let requests = handle.step(req.vote_budget).await?;
    let view = handle.view();
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "phase": view.phase(), "requests": requests.len() })),
    )
        .into_response())
}

async fn stop(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    let handle = state.handle(&id)?;
    let given_up = handle.stop().await?;
    let view = handle.view();
    Ok(Json(json!({ "phase": view.phase(), "given_up": given_up.len() })).into_response())
}

#[derive(Deserialize)]
struct WorkerBody {
    worker_id: WorkerId,
    #[serde(default)]
    badge: bool,
}

async fn register_worker(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let handle = state.handle(&id)?;
    let req: WorkerBody = parse_body(&body)?;
    handle.register_worker(req.worker_id.clone(), req.badge).await?;
    Ok(Json(json!({ "worker_id": req.worker_id, "badge": req.badge })).into_response())
}

async fn status(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    Ok(Json(state.handle(&id)?.view().status()).into_response())
}

async fn export(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    let doc = state.handle(&id)?.view().export().to_json();
    Ok(([(axum::http::header::CONTENT_TYPE, "application/json")], doc).into_response())
}

async fn next_task(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let view = state.handle(&id)?.view();
    let worker = q
        .get("worker_id")
        .filter(|w| !w.is_empty())
        .ok_or_else(|| ServiceError::BadRequest("worker_id is required".into()))?;
    match view.next_task(&WorkerId::from(worker.as_str()))? {
        Some(task) => Ok(Json(task).into_response()),
        None => Ok(StatusCode::NO_CONTENT.into_response()),
    }
}

#[derive(Deserialize)]
struct VoteBody {
    assignment_id: String,
    paper_id: PaperId,
    criterion_id: CriterionId,
    label: Label,
}

async fn submit_vote(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let handle = state.handle(&id)?;
    let req: VoteBody = parse_body(&body)?;
    let worker_id = TaskAssignment::worker_from_id(&req.assignment_id)
        .ok_or_else(|| ServiceError::BadRequest(format!("malformed assignment_id {:?}", req.assignment_id)))?;
    let vote = handle
        .submit_vote(VoteSubmission {
            assignment_id: req.assignment_id,
            worker_id,
            paper_id: req.paper_id,
            criterion_id: req.criterion_id,
            label: req.label,
        })
        .await?;
    Ok(Json(json!({ "sequence_no": vote.sequence_no })).into_response())
}

/// Binds and serves until the process is interrupted.
pub async fn serve(state: Arc<AppState>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
