//! HTTP API under `/api`.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::Router;
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{StatusCode, header};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use serde::{Deserialize, Serialize};
use serde_json::{Value, json};
use vizex_core::ingest::IngestError;
use vizex_core::metrics::{HeatNormalization, HeatmapKind, HeatmapParams};
use vizex_core::project::{Project, ProjectConfig, ProjectError, load_project, project_id};
use vizex_core::query::{QueryConfig, QueryError, QueryResult, execute, parse, query_hash};
use vizex_core::results::{list_results, load_result, save_result};

/// A loaded project and its stable id.
pub struct ProjectHandle {
    pub id: String,
    pub root: Option<PathBuf>,
    pub project: Project,
    /// One lock per query hash so identical concurrent queries compute once.
    inflight: Mutex<HashMap<String, Arc<Mutex<Option<Arc<QueryResult>>>>>>,
}

impl ProjectHandle {
    pub fn new(id: String, root: Option<PathBuf>, project: Project) -> Self {
        Self { id, root, project, inflight: Mutex::new(HashMap::new()) }
    }

    /// Loads the project at `root` under its path-derived id.
    pub fn load(root: &Path, config: &ProjectConfig) -> Result<Self, ProjectError> {
        let project = load_project(root, config)?;
        Ok(Self::new(project_id(root), Some(root.to_path_buf()), project))
    }
}

#[derive(Clone)]
pub struct AppState {
    pub projects: Arc<BTreeMap<String, Arc<ProjectHandle>>>,
    pub frames_enabled: bool,
    pub query_config: QueryConfig,
}

impl AppState {
    pub fn new(handles: Vec<ProjectHandle>, frames_enabled: bool, query_config: QueryConfig) -> Self {
        let projects = handles.into_iter().map(|h| (h.id.clone(), Arc::new(h))).collect();
        Self { projects: Arc::new(projects), frames_enabled, query_config }
    }

    fn project(&self, id: &str) -> Result<Arc<ProjectHandle>, ApiError> {
        self.projects.get(id).cloned().ok_or_else(|| ApiError::new(Code::UnknownProject, format!("no project `{id}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Code {
    SyntaxError,
    UnknownKpi,
    UnknownMetric,
    SeriesTooShort,
    UnknownSeries,
    UnknownProject,
    FrameOutOfRange,
    FramesUnavailable,
    FramesDisabled,
    BadRequest,
    Internal,
}

impl Code {
    pub fn status(self) -> StatusCode {
        match self {
            Code::SyntaxError | Code::BadRequest => StatusCode::BAD_REQUEST,
            Code::UnknownKpi | Code::UnknownMetric | Code::SeriesTooShort => StatusCode::UNPROCESSABLE_ENTITY,
            Code::UnknownSeries | Code::UnknownProject | Code::FrameOutOfRange | Code::FramesUnavailable => {
                StatusCode::NOT_FOUND
            }
            Code::FramesDisabled => StatusCode::FORBIDDEN,
            Code::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Position {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    pub code: Code,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<Position>,
}

impl ApiError {
    pub fn new(code: Code, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), position: None }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), axum::Json(json!({ "error": self }))).into_response()
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        let message = e.to_string();
        match e {
            QueryError::Syntax(s) => {
                ApiError { code: Code::SyntaxError, message, position: Some(Position { line: s.line, col: s.col }) }
            }
            QueryError::UnknownKpi(_) => ApiError::new(Code::UnknownKpi, message),
            QueryError::UnknownMetric(_) => ApiError::new(Code::UnknownMetric, message),
            QueryError::SeriesTooShort { .. } => ApiError::new(Code::SeriesTooShort, message),
            QueryError::InvalidConfig(_) => ApiError::new(Code::BadRequest, message),
            QueryError::Rdd(vizex_core::rdd::RddError::InvalidParameter(_)) => ApiError::new(Code::BadRequest, message),
            QueryError::Project(p) => p.into(),
            QueryError::Rdd(_) => ApiError::new(Code::Internal, message),
        }
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        let message = e.to_string();
        match e {
            ProjectError::UnknownKpi(_) => ApiError::new(Code::UnknownKpi, message),
            ProjectError::UnknownMetric(_) => ApiError::new(Code::UnknownMetric, message),
            ProjectError::InvalidConfig(_) => ApiError::new(Code::BadRequest, message),
            _ => ApiError::new(Code::Internal, message),
        }
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        ApiError::new(Code::Internal, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs CPU-bound engine work off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::new(Code::Internal, e.to_string()))?
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/projects", get(list_projects))
        .route("/api/projects/{id}", get(project_detail))
        .route("/api/projects/{id}/series", get(list_series))
        .route("/api/projects/{id}/series/{name}", get(series))
        .route("/api/projects/{id}/metrics/{name}", get(metric))
        .route("/api/projects/{id}/heatmap", get(heatmap))
        .route("/api/projects/{id}/frames/{n}", get(frame))
        .route("/api/projects/{id}/query", post(query))
        .route("/api/projects/{id}/results", get(results))
        .fallback(|| async { ApiError::new(Code::BadRequest, "no such route") })
        .with_state(state)
}

fn summary(h: &ProjectHandle, frames_enabled: bool) -> Value {
    let m = h.project.manifest();
    json!({
        "id": h.id,
        "root": h.root.as_ref().map(|r| r.display().to_string()),
        "frame_count": m.frame_count,
        "width": m.width,
        "height": m.height,
        "label_of_interest": m.label_of_interest,
        "frames_available": h.project.frames().is_some(),
        "frames_served": frames_enabled && h.project.frames().is_some(),
    })
}

async fn list_projects(State(s): State<AppState>) -> axum::Json<Value> {
    axum::Json(Value::Array(s.projects.values().map(|h| summary(h, s.frames_enabled)).collect()))
}

async fn project_detail(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<axum::Json<Value>> {
    let h = s.project(&id)?;
    let mut v = summary(&h, s.frames_enabled);
    v["kpis"] = json!(h.project.kpi_definitions().collect::<Vec<_>>());
    v["metrics"] = json!(h.project.metric_names());
    v["has_predictions"] = json!(h.project.predictions().is_some());
    v["has_ground_truth"] = json!(h.project.ground_truth().is_some());
    Ok(axum::Json(v))
}

async fn list_series(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<axum::Json<Value>> {
    let h = s.project(&id)?;
    let kpis: Vec<Value> = h.project.kpi_definitions().map(|d| json!({ "name": d.name, "kind": "kpi" })).collect();
    let metrics: Vec<Value> =
        h.project.metric_names().into_iter().map(|n| json!({ "name": n, "kind": "metric" })).collect();
    Ok(axum::Json(Value::Array(kpis.into_iter().chain(metrics).collect())))
}

#[derive(Debug, Deserialize)]
struct RangeParams {
    from: Option<usize>,
    to: Option<usize>,
}

fn range_body(name: &str, points: &[(usize, f64)], r: &RangeParams) -> ApiResult<Value> {
    if let (Some(a), Some(b)) = (r.from, r.to)
        && a > b
    {
        return Err(ApiError::new(Code::BadRequest, format!("from ({a}) is after to ({b})")));
    }
    let kept: Vec<&(usize, f64)> =
        points.iter().filter(|p| r.from.is_none_or(|a| p.0 >= a) && r.to.is_none_or(|b| p.0 <= b)).collect();
    Ok(json!({
        "name": name,
        "frames": kept.iter().map(|p| p.0).collect::<Vec<_>>(),
        "values": kept.iter().map(|p| p.1).collect::<Vec<_>>(),
    }))
}

fn params<T: serde::de::DeserializeOwned>(
    q: Result<Query<T>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<T> {
    q.map(|q| q.0).map_err(|e| ApiError::new(Code::BadRequest, e.body_text()))
}

async fn series(
    State(s): State<AppState>,
    UrlPath((id, name)): UrlPath<(String, String)>,
    q: Result<Query<RangeParams>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<axum::Json<Value>> {
    let h = s.project(&id)?;
    let r = params(q)?;
    blocking(move || {
        if h.project.has_kpi(&name) {
            let ser = h.project.kpi_series(&name)?;
            let mut body = range_body(&name, &ser.points, &r)?;
            body["kind"] = json!("kpi");
            body["meta"] = json!(ser.meta);
            Ok(axum::Json(body))
        } else if h.project.has_metric(&name) {
            let ser = h.project.metric_series(&name)?;
            let mut body = range_body(&name, &ser.points, &r)?;
            body["kind"] = json!("metric");
            Ok(axum::Json(body))
        } else {
            Err(ApiError::new(Code::UnknownSeries, format!("no series `{name}`")))
        }
    })
    .await
}

async fn metric(
    State(s): State<AppState>,
    UrlPath((id, name)): UrlPath<(String, String)>,
    q: Result<Query<RangeParams>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<axum::Json<Value>> {
    let h = s.project(&id)?;
    let r = params(q)?;
    blocking(move || {
        if !h.project.has_metric(&name) {
            return Err(ApiError::new(Code::UnknownSeries, format!("no metric series `{name}`")));
        }
        let ser = h.project.metric_series(&name)?;
        Ok(axum::Json(range_body(&name, &ser.points, &r)?))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct HeatmapQuery {
    kind: Option<String>,
    grid: Option<usize>,
    normalization: Option<String>,
}

async fn heatmap(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    q: Result<Query<HeatmapQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<axum::Json<Value>> {
    let h = s.project(&id)?;
    let q = params(q)?;
    let kind: HeatmapKind = q
        .kind
        .as_deref()
        .unwrap_or("undercount")
        .parse()
        .map_err(|_| ApiError::new(Code::BadRequest, "kind must be overcount or undercount"))?;
    let grid = q.grid.unwrap_or(4);
    if grid == 0 || grid > 64 {
        return Err(ApiError::new(Code::BadRequest, "grid must be between 1 and 64"));
    }
    let normalization = match q.normalization.as_deref() {
        None | Some("per_frame") => HeatNormalization::PerFrame,
        Some("raw") => HeatNormalization::Raw,
        Some(other) => return Err(ApiError::new(Code::BadRequest, format!("unknown normalization `{other}`"))),
    };
    blocking(move || {
        let p = HeatmapParams { rows: grid, cols: grid, normalization, ..HeatmapParams::default() };
        let (over, under) = h.project.heatmaps(&p).map_err(|e| match e {
            ProjectError::MissingLog(_) => ApiError::new(Code::UnknownMetric, e.to_string()),
            other => other.into(),
        })?;
        Ok(axum::Json(json!(if kind == HeatmapKind::Overcount { over } else { under })))
    })
    .await
}

async fn frame(State(s): State<AppState>, UrlPath((id, n)): UrlPath<(String, String)>) -> ApiResult<Response> {
    let h = s.project(&id)?;
    if !s.frames_enabled {
        return Err(ApiError::new(Code::FramesDisabled, "frame serving is disabled"));
    }
    let n: usize = n.parse().map_err(|_| ApiError::new(Code::BadRequest, format!("bad frame index `{n}`")))?;
    let frames = h.project.frames().ok_or_else(|| ApiError::new(Code::FramesUnavailable, "project has no frames"))?;
    let f = frames
        .get(n)
        .ok_or_else(|| ApiError::new(Code::FrameOutOfRange, format!("frame {n} outside 0..{}", frames.len())))?;
    Ok(([(header::CONTENT_TYPE, "image/x-portable-pixmap")], f.to_ppm()).into_response())
}

/// Optional overrides of the server's query configuration.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryOverrides {
    pub bandwidths: Option<Vec<usize>>,
    pub delta: Option<usize>,
    pub alpha: Option<f64>,
    pub null_sims: Option<usize>,
    pub seed: Option<u64>,
    pub samples_per_window: Option<usize>,
    pub min_separation: Option<usize>,
}

impl QueryOverrides {
    pub fn apply(&self, base: &QueryConfig) -> QueryConfig {
        let mut c = base.clone();
        if let Some(b) = &self.bandwidths {
            c.bandwidths = b.clone();
        }
        c.delta = self.delta.unwrap_or(c.delta);
        c.alpha = self.alpha.unwrap_or(c.alpha);
        c.null_sims = self.null_sims.unwrap_or(c.null_sims);
        c.seed = self.seed.unwrap_or(c.seed);
        c.samples_per_window = self.samples_per_window.unwrap_or(c.samples_per_window);
        c.min_separation = self.min_separation.or(c.min_separation);
        c
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryBody {
    text: String,
    #[serde(default)]
    options: QueryOverrides,
}

/// Parses, checks the result store, executes and persists a query.
pub fn run_query(h: &ProjectHandle, text: &str, config: &QueryConfig) -> ApiResult<Arc<QueryResult>> {
    let ast = parse(text).map_err(QueryError::from)?;
    let effective = config.effective(&ast);
    effective.validate().map_err(ApiError::from)?;
    let hash = query_hash(&ast, &effective);
    let slot = h.inflight.lock().expect("inflight lock").entry(hash.clone()).or_default().clone();
    let mut slot = slot.lock().expect("query slot lock");
    if let Some(r) = slot.as_ref() {
        return Ok(r.clone());
    }
    let results_dir = h.project.results_dir();
    if let Some(dir) = &results_dir
        && let Some(r) = load_result(dir, &hash)?
        && r.config == effective
    {
        let r = Arc::new(r);
        *slot = Some(r.clone());
        return Ok(r);
    }
    let result = execute(&ast, &h.project, config)?;
    if let Some(dir) = &results_dir {
        save_result(dir, &result)?;
    }
    let result = Arc::new(result);
    *slot = Some(result.clone());
    Ok(result)
}

async fn query(State(s): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Response> {
    let h = s.project(&id)?;
    let body: QueryBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::new(Code::BadRequest, format!("bad request body: {e}")))?;
    let config = body.options.apply(&s.query_config);
    let result = blocking(move || run_query(&h, &body.text, &config)).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], vizex_core::results::result_json(&result)).into_response())
}

async fn results(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<axum::Json<Value>> {
    let h = s.project(&id)?;
    let entries = match h.project.results_dir() {
        Some(dir) => list_results(&dir)?,
        None => Vec::new(),
    };
    Ok(axum::Json(json!(entries)))
}
