//! HTTP/JSON adapter over [`gridwrangle::Session`]. Handlers only translate
//! requests into session calls and results into JSON.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gridwrangle::detect::CodeCounts;
use gridwrangle::sampler::{SampleParams, Sampling};
use gridwrangle::script::RenderTarget;
use gridwrangle::session::{system_clock, SessionInfo, UpdateOutcome};
use gridwrangle::storage::{FileStorage, LogStorage, MemoryStorage};
use gridwrangle::wrangle::{PreviewResult, RepairSuggestion, WranglerRule};
use gridwrangle::{
    CustomDetector, CustomWrangler, Error, ErrorCode, GroupKey, IngestOptions, RepairAction, Session, SessionConfig,
    Version,
};
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock;

pub const VERSION_HEADER: &str = "x-dataset-version";
const LOG_SUFFIX: &str = "gwlog";

/// Every route, for docs and tests.
pub const ROUTES: &[(&str, &str)] = &[
    ("POST", "/datasets"),
    ("GET", "/datasets/{id}"),
    ("GET", "/datasets/{id}/charts/{cat}/{num}"),
    ("GET", "/datasets/{id}/groups/ranked"),
    ("GET", "/datasets/{id}/groups/{key}/suggestions"),
    ("POST", "/datasets/{id}/preview"),
    ("POST", "/datasets/{id}/apply"),
    ("POST", "/datasets/{id}/undo"),
    ("POST", "/datasets/{id}/redo"),
    ("POST", "/datasets/{id}/flush"),
    ("GET", "/datasets/{id}/script"),
    ("POST", "/datasets/{id}/detectors"),
    ("POST", "/datasets/{id}/wranglers"),
];

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Where session logs live; in-memory logs when absent.
    pub data_dir: Option<PathBuf>,
    /// Defaults for uploads that send no config part.
    pub session: SessionConfig,
    pub max_upload_bytes: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            data_dir: None,
            session: SessionConfig::default(),
            max_upload_bytes: 256 << 20,
        }
    }
}

/// Sessions by dataset id. Each session sits behind its own fair RwLock:
/// reads run concurrently, writes queue in arrival order.
#[derive(Clone)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<RwLock<Session>>>>>,
    config: Arc<ServerConfig>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> AppState {
        AppState {
            sessions: Arc::default(),
            config: Arc::new(config),
        }
    }

    /// Recovers every session log found in the data directory.
    pub async fn recover_all(&self) -> Result<usize, Error> {
        let Some(dir) = &self.config.data_dir else {
            return Ok(0);
        };
        let entries = std::fs::read_dir(dir).map_err(|e| Error::StorageFailure(format!("{}: {e}", dir.display())))?;
        let mut n = 0;
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some(LOG_SUFFIX) {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                continue;
            };
            let session = Session::recover(Box::new(FileStorage::open(&path)?), system_clock())?;
            self.sessions.write().await.insert(id, Arc::new(RwLock::new(session)));
            n += 1;
        }
        Ok(n)
    }

    async fn get(&self, id: &str) -> Result<Arc<RwLock<Session>>, ApiError> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("UnknownDataset", format!("no dataset `{id}`")))
    }

    fn storage_for(&self, id: &str) -> Result<Box<dyn LogStorage>, Error> {
        match &self.config.data_dir {
            None => Ok(Box::new(MemoryStorage::new())),
            Some(dir) => Ok(Box::new(FileStorage::open(dir.join(format!("{id}.{LOG_SUFFIX}")))?)),
        }
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.config.max_upload_bytes;
    Router::new()
        .route("/datasets", post(upload))
        .route("/datasets/{id}", get(info))
        .route("/datasets/{id}/charts/{cat}/{num}", get(chart))
        .route("/datasets/{id}/groups/ranked", get(ranked))
        .route("/datasets/{id}/groups/{key}/suggestions", get(suggestions))
        .route("/datasets/{id}/preview", post(preview))
        .route("/datasets/{id}/apply", post(apply))
        .route("/datasets/{id}/undo", post(undo))
        .route("/datasets/{id}/redo", post(redo))
        .route("/datasets/{id}/flush", post(flush))
        .route("/datasets/{id}/script", get(script))
        .route("/datasets/{id}/detectors", post(register_detector))
        .route("/datasets/{id}/wranglers", post(register_wrangler))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Problem-details body with a machine-readable `code`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    #[serde(rename = "type")]
    pub kind: String,
    pub title: String,
    pub status: u16,
    pub code: String,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    detail: String,
    offset: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, detail: impl Into<String>) -> ApiError {
        ApiError {
            status,
            code: code.to_string(),
            detail: detail.into(),
            offset: None,
        }
    }

    fn not_found(code: &str, detail: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::NOT_FOUND, code, detail)
    }

    fn bad_request(code: &str, detail: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, code, detail)
    }
}

pub fn status_of(e: &Error) -> StatusCode {
    use Error::*;
    match e {
        MalformedCsv(_) | EmptyDataset | NoCategoricalColumns | NoNumericColumns | InvalidGroupConfig(_)
        | UnsupportedTarget(_) | UnknownSampling(_) | InvalidConfig(_) => StatusCode::BAD_REQUEST,
        UnknownRow(_) | UnknownColumn(_) | UnknownGroup(_) | NoSuchErrorInGroup { .. } => StatusCode::NOT_FOUND,
        DuplicateCode(_) | NothingToUndo | NothingToRedo | StaleDelta(_) | SequenceGap { .. } => StatusCode::CONFLICT,
        UnknownErrorCode(_) | InvalidErrorCode(_) | ExpressionParse { .. } | ExpressionType { .. }
        | InvalidAction(_) | InapplicableAction(_) | InvalidDelta(_) | InvalidScript(_) => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        StorageFailure(_) | CorruptLog(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> ApiError {
        ApiError {
            status: status_of(&e),
            code: e.code().to_string(),
            detail: e.to_string(),
            offset: e.offset(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Problem {
            kind: format!("urn:gridwrangle:error:{}", self.code),
            title: self.status.canonical_reason().unwrap_or("Error").to_string(),
            status: self.status.as_u16(),
            code: self.code,
            detail: self.detail,
            offset: self.offset,
        };
        let mut res = (self.status, Json(body)).into_response();
        res.headers_mut()
            .insert(header::CONTENT_TYPE, HeaderValue::from_static("application/problem+json"));
        res
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// JSON body tagged with the dataset version it reflects.
fn versioned<T: Serialize>(status: StatusCode, version: Version, body: T) -> Response {
    let mut res = (status, Json(body)).into_response();
    res.headers_mut().insert(
        HeaderName::from_static(VERSION_HEADER),
        HeaderValue::from_str(&version.0.to_string()).expect("digits"),
    );
    res
}

/// Body extractor that reports malformed JSON as problem details.
pub struct JsonBody<T>(pub T);

impl<S, T> axum::extract::FromRequest<S> for JsonBody<T>
where
    T: serde::de::DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: axum::extract::Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(JsonBody(v)),
            Err(e) => Err(ApiError::new(e.status(), "InvalidRequestBody", e.body_text())),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct UploadResponse {
    pub dataset_id: String,
    #[serde(flatten)]
    pub info: SessionInfo,
    pub group_summary: Vec<ChartSummary>,
}

/// Group count of one (categorical, numeric) chart.
#[derive(Debug, Serialize)]
pub struct ChartSummary {
    pub cat_column: String,
    pub num_column: String,
    pub groups: usize,
    pub errors: usize,
}

fn chart_summaries(s: &Session) -> Vec<ChartSummary> {
    let engine = s.engine();
    let mut out: Vec<ChartSummary> = Vec::new();
    for g in engine.groups().iter() {
        let errors = engine.store().total(&g.key());
        match out.last_mut() {
            Some(last) if last.cat_column == g.cat_column && last.num_column == g.num_column => {
                last.groups += 1;
                last.errors += errors;
            }
            _ => out.push(ChartSummary {
                cat_column: g.cat_column.to_string(),
                num_column: g.num_column.to_string(),
                groups: 1,
                errors,
            }),
        }
    }
    out
}

async fn upload(State(state): State<AppState>, mut form: Multipart) -> ApiResult<Response> {
    let mut file: Option<Vec<u8>> = None;
    let mut config = state.config.session.clone();
    let mut options = IngestOptions::default();
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request("InvalidMultipart", e.body_text()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request("InvalidMultipart", e.body_text()))?;
        match name.as_str() {
            "file" => file = Some(bytes.to_vec()),
            "config" => {
                let mut v: serde_json::Value = serde_json::from_slice(&bytes)
                    .map_err(|e| ApiError::bad_request("InvalidConfig", e.to_string()))?;
                // merge over the server defaults
                let mut base = serde_json::to_value(&config).expect("config serializes");
                if let (Some(b), Some(o)) = (base.as_object_mut(), v.as_object_mut()) {
                    b.append(o);
                }
                config = serde_json::from_value(base).map_err(|e| ApiError::bad_request("InvalidConfig", e.to_string()))?;
            }
            "delimiter" => {
                let s = String::from_utf8_lossy(&bytes).to_string();
                let d = match s.as_str() {
                    "\\t" | "tab" => b'\t',
                    _ if s.len() == 1 && s.is_ascii() => s.as_bytes()[0],
                    _ => return Err(ApiError::bad_request("InvalidConfig", "delimiter must be one ASCII character")),
                };
                options.delimiter = d;
            }
            _ => {}
        }
    }
    let file = file.ok_or_else(|| ApiError::bad_request("MissingFile", "multipart field `file` is required"))?;

    // the id is derived from the content; repeated uploads get a suffix
    let base_id = format!("ds-{}", &gridwrangle::script::sha256_hex(&file)[..12]);
    let mut sessions = state.sessions.write().await;
    let mut id = base_id.clone();
    let mut n = 1;
    while sessions.contains_key(&id) {
        n += 1;
        id = format!("{base_id}-{n}");
    }
    options.dataset_id = Some(id.clone());
    let storage = state.storage_for(&id)?;
    let session = Session::create(&file, &options, config, storage, system_clock())?;
    let body = UploadResponse {
        dataset_id: id.clone(),
        info: session.info(),
        group_summary: chart_summaries(&session),
    };
    let version = session.version();
    sessions.insert(id, Arc::new(RwLock::new(session)));
    Ok(versioned(StatusCode::CREATED, version, body))
}

async fn info(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = state.get(&id).await?;
    let s = s.read().await;
    Ok(versioned(StatusCode::OK, s.version(), s.info()))
}

#[derive(Debug, Deserialize)]
pub struct ChartQuery {
    sampling: Option<String>,
    k: Option<usize>,
    seed: Option<u64>,
}

async fn chart(
    State(state): State<AppState>,
    Path((id, cat, num)): Path<(String, String, String)>,
    Query(q): Query<ChartQuery>,
) -> ApiResult<Response> {
    let s = state.get(&id).await?;
    let s = s.read().await;
    let defaults = SampleParams {
        k: s.engine().config().sample_k,
        ..Default::default()
    };
    let params = SampleParams {
        sampling: match q.sampling.as_deref() {
            None | Some("") => defaults.sampling,
            Some(name) => name.parse::<Sampling>()?,
        },
        k: q.k.unwrap_or(defaults.k),
        seed: q.seed.unwrap_or(defaults.seed),
    };
    let payload = s.engine().chart(&cat, &num, &params)?;
    Ok(versioned(StatusCode::OK, s.version(), payload))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RankedGroup {
    pub key: String,
    pub cat_column: String,
    pub cat_value: String,
    pub num_column: String,
    pub errors: usize,
    pub error_counts: CodeCounts,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RankedResponse {
    pub version: Version,
    pub groups: Vec<RankedGroup>,
}

async fn ranked(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = state.get(&id).await?;
    let s = s.read().await;
    let groups = s
        .engine()
        .ranked_groups()
        .into_iter()
        .map(|(k, n)| RankedGroup {
            key: k.to_string(),
            error_counts: s.engine().store().counts(&k),
            cat_column: k.cat_column,
            cat_value: k.cat_value,
            num_column: k.num_column,
            errors: n,
        })
        .collect();
    let body = RankedResponse {
        version: s.version(),
        groups,
    };
    Ok(versioned(StatusCode::OK, s.version(), body))
}

#[derive(Debug, Deserialize)]
pub struct SuggestQuery {
    code: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub version: Version,
    pub group: String,
    pub code: ErrorCode,
    pub suggestions: Vec<RepairSuggestion>,
}

async fn suggestions(
    State(state): State<AppState>,
    Path((id, key)): Path<(String, String)>,
    Query(q): Query<SuggestQuery>,
) -> ApiResult<Response> {
    let key: GroupKey = key.parse()?;
    let code: ErrorCode = q.code.parse()?;
    let s = state.get(&id).await?;
    let s = s.read().await;
    let list = s.suggest(&key, &code)?;
    let body = SuggestResponse {
        version: s.version(),
        group: key.to_string(),
        code,
        suggestions: list,
    };
    Ok(versioned(StatusCode::OK, s.version(), body))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PreviewResponse {
    pub version: Version,
    #[serde(flatten)]
    pub preview: PreviewResult,
}

async fn preview(
    State(state): State<AppState>,
    Path(id): Path<String>,
    JsonBody(action): JsonBody<RepairAction>,
) -> ApiResult<Response> {
    let s = state.get(&id).await?;
    let s = s.read().await;
    let preview = s.preview(&action)?;
    let body = PreviewResponse {
        version: s.version(),
        preview,
    };
    Ok(versioned(StatusCode::OK, s.version(), body))
}

fn outcome(o: UpdateOutcome) -> Response {
    versioned(StatusCode::OK, o.version, o)
}

async fn apply(
    State(state): State<AppState>,
    Path(id): Path<String>,
    JsonBody(action): JsonBody<RepairAction>,
) -> ApiResult<Response> {
    let s = state.get(&id).await?;
    let mut s = s.write().await;
    Ok(outcome(s.apply(&action)?))
}

async fn undo(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = state.get(&id).await?;
    let mut s = s.write().await;
    Ok(outcome(s.undo()?))
}

async fn redo(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = state.get(&id).await?;
    let mut s = s.write().await;
    Ok(outcome(s.redo()?))
}

async fn flush(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = state.get(&id).await?;
    let mut s = s.write().await;
    let report = s.flush()?;
    Ok(versioned(StatusCode::OK, s.version(), report))
}

#[derive(Debug, Deserialize)]
pub struct ScriptQuery {
    target: Option<String>,
}

async fn script(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ScriptQuery>,
) -> ApiResult<Response> {
    let target: RenderTarget = q.target.as_deref().unwrap_or("json").parse()?;
    let s = state.get(&id).await?;
    let s = s.read().await;
    let (ctype, ext) = match target {
        RenderTarget::Json => ("application/json", "json"),
        RenderTarget::Python => ("text/x-python; charset=utf-8", "py"),
    };
    let text = s.render_script(target);
    let disposition = format!("attachment; filename=\"{id}-replay.{ext}\"");
    let mut res = (
        [
            (header::CONTENT_TYPE, ctype.to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        text,
    )
        .into_response();
    res.headers_mut().insert(
        HeaderName::from_static(VERSION_HEADER),
        HeaderValue::from_str(&s.version().0.to_string()).expect("digits"),
    );
    Ok(res)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DetectorRequest {
    pub code: String,
    pub predicate: String,
    #[serde(default)]
    pub column: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegistrationResponse {
    pub version: Version,
    pub code: ErrorCode,
    pub error_summary: CodeCounts,
}

async fn register_detector(
    State(state): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<DetectorRequest>,
) -> ApiResult<Response> {
    let detector = CustomDetector::new(&req.code, &req.predicate, req.column.as_deref())?;
    let code = detector.code.clone();
    let s = state.get(&id).await?;
    let mut s = s.write().await;
    s.register_detector(detector)?;
    let body = RegistrationResponse {
        version: s.version(),
        code,
        error_summary: s.engine().store().summary(),
    };
    Ok(versioned(StatusCode::CREATED, s.version(), body))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WranglerRequest {
    pub code: String,
    pub rule: String,
}

async fn register_wrangler(
    State(state): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<WranglerRequest>,
) -> ApiResult<Response> {
    let code: ErrorCode = req.code.parse()?;
    let rule: WranglerRule = req.rule.parse()?;
    let s = state.get(&id).await?;
    let mut s = s.write().await;
    s.register_wrangler(CustomWrangler {
        code: code.clone(),
        rule,
    })?;
    let body = RegistrationResponse {
        version: s.version(),
        code,
        error_summary: s.engine().store().summary(),
    };
    Ok(versioned(StatusCode::CREATED, s.version(), body))
}
