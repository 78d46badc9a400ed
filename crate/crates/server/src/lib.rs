//! HTTP API over a frozen checkpoint and a persistent document index.
//!
//! | route               | purpose                                    |
//! |---------------------|--------------------------------------------|
//! | `POST /v1/profile`  | per-sentence spans and levels for a text   |
//! | `POST /v1/documents`| profile and index a document               |
//! | `GET /v1/search`    | conjunctive search by item, level, language|
//! | `GET /v1/tags`      | the model's tag inventory                  |
//! | `GET /v1/health`    | liveness plus the checkpoint checksum      |
//!
//! Every non-2xx response carries an [`ApiError`] body. The model is
//! read-only; the index sits behind a reader/writer lock, so a reader sees an
//! index either before or after a write, never in between. Writes are
//! persisted before the lock is released.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{BytesRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gramprof_core::checkpoint::{LevelPrediction, ModelCheckpoint};
use gramprof_core::corpus::Token;
use gramprof_core::index::{self, DocumentIndex, DocumentRecord};
use gramprof_core::profiler::{profile_text, Prediction};
use gramprof_core::span_model::DecodedSpan;
use gramprof_core::Error;
use serde::{Deserialize, Serialize};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_MAX_BODY: usize = 64 * 1024;
/// Room for the JSON wrapper and escaping around a text at the size limit.
const ENVELOPE_SLACK: usize = 16 * 1024;

/// Error body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_body", message)
    }

    fn too_large(limit: usize) -> Self {
        Self::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "payload_too_large",
            format!("text exceeds the {limit}-byte limit"),
        )
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let message = err.to_string();
        let (status, code) = match err {
            Error::UnsupportedLanguage(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unsupported_language"),
            Error::UnknownLevel(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_level"),
            Error::NoSentences => (StatusCode::UNPROCESSABLE_ENTITY, "no_sentences"),
            Error::NoLevelHead => (StatusCode::UNPROCESSABLE_ENTITY, "no_level_head"),
            Error::DuplicateDocument(_) => (StatusCode::CONFLICT, "duplicate_document"),
            Error::Invalid(_) => (StatusCode::BAD_REQUEST, "invalid_body"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Process configuration; see [`ServerConfig::from_env`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    pub model: PathBuf,
    pub index: PathBuf,
    pub port: u16,
    pub max_body: usize,
}

impl ServerConfig {
    /// Reads `GRAMPROF_MODEL`, `GRAMPROF_INDEX`, `GRAMPROF_PORT` and
    /// `GRAMPROF_MAX_BODY`; the first two are required.
    pub fn from_env() -> Result<Self, String> {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.is_empty());
        let model = var("GRAMPROF_MODEL").ok_or("GRAMPROF_MODEL is not set")?;
        let index = var("GRAMPROF_INDEX").ok_or("GRAMPROF_INDEX is not set")?;
        let port = match var("GRAMPROF_PORT") {
            Some(p) => p.parse().map_err(|_| format!("GRAMPROF_PORT={p} is not a port"))?,
            None => DEFAULT_PORT,
        };
        let max_body = match var("GRAMPROF_MAX_BODY") {
            Some(b) => b.parse().map_err(|_| format!("GRAMPROF_MAX_BODY={b} is not a byte count"))?,
            None => DEFAULT_MAX_BODY,
        };
        Ok(ServerConfig {
            model: model.into(),
            index: index.into(),
            port,
            max_body,
        })
    }
}

/// Shared state behind every handler.
pub struct AppState {
    checkpoint: Arc<ModelCheckpoint>,
    checksum: String,
    index: RwLock<DocumentIndex>,
    index_path: Option<PathBuf>,
    max_body: usize,
}

impl AppState {
    /// `index_path`, when given, receives the index after every write.
    pub fn new(
        checkpoint: ModelCheckpoint,
        index: DocumentIndex,
        index_path: Option<PathBuf>,
        max_body: usize,
    ) -> gramprof_core::Result<Self> {
        if index.levels() != &checkpoint.levels {
            return Err(Error::Invalid("index levels differ from the checkpoint's".into()));
        }
        Ok(AppState {
            checksum: checkpoint.checksum()?,
            checkpoint: Arc::new(checkpoint),
            index: RwLock::new(index),
            index_path,
            max_body,
        })
    }

    /// Loads the checkpoint and opens (or starts) the index named by `config`.
    pub fn open(config: &ServerConfig) -> gramprof_core::Result<Self> {
        let checkpoint = ModelCheckpoint::load(&config.model)?;
        let index = DocumentIndex::open_or_new(&config.index, checkpoint.levels.clone())?;
        Self::new(checkpoint, index, Some(config.index.clone()), config.max_body)
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    fn read_index(&self) -> ApiResult<std::sync::RwLockReadGuard<'_, DocumentIndex>> {
        self.index.read().map_err(|_| ApiError::internal("index lock poisoned"))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let body_limit = state.max_body + ENVELOPE_SLACK;
    Router::new()
        .route("/v1/profile", post(profile))
        .route("/v1/documents", post(add_document))
        .route("/v1/search", get(search))
        .route("/v1/tags", get(tags))
        .route("/v1/health", get(health))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(state)
}

/// Loads the model and index named by `config` and serves until Ctrl-C.
pub async fn serve(config: ServerConfig) -> std::io::Result<()> {
    let state = AppState::open(&config).map_err(std::io::Error::other)?;
    serve_state(state, config.port).await
}

/// Binds `0.0.0.0:{port}` and serves `state` until Ctrl-C.
pub async fn serve_state(state: AppState, port: u16) -> std::io::Result<()> {
    let documents = state.read_index().map(|i| i.len()).unwrap_or(0);
    log::info!("model {} loaded; index holds {documents} documents", state.checksum);
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([0, 0, 0, 0], port))).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this route")
}

/// Parses a JSON body, turning every failure into an [`ApiError`].
fn json_body<T: for<'de> Deserialize<'de>>(body: Result<axum::body::Bytes, BytesRejection>, limit: usize) -> ApiResult<T> {
    let bytes = body.map_err(|rejection| {
        if rejection.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::too_large(limit)
        } else {
            ApiError::bad_request(rejection.body_text())
        }
    })?;
    serde_json::from_slice(&bytes).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

async fn run_blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileRequest {
    #[serde(default)]
    pub text: String,
    pub lang: String,
    #[serde(default)]
    pub threshold: Option<f64>,
}

/// One profiled sentence as returned to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceView {
    pub id: String,
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
    pub tokens: Vec<Token>,
    pub spans: Vec<DecodedSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<LevelPrediction>,
}

impl From<Prediction> for SentenceView {
    fn from(p: Prediction) -> Self {
        SentenceView {
            id: p.id,
            text: p.text,
            char_start: p.char_start,
            char_end: p.char_end,
            tokens: p.tokens,
            spans: p.spans,
            level: p.level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileResponse {
    pub sentences: Vec<SentenceView>,
}

async fn profile(
    State(state): State<Arc<AppState>>,
    body: Result<axum::body::Bytes, BytesRejection>,
) -> ApiResult<Json<ProfileResponse>> {
    let req: ProfileRequest = json_body(body, state.max_body)?;
    if req.text.len() > state.max_body {
        return Err(ApiError::too_large(state.max_body));
    }
    let ckpt = Arc::clone(&state.checkpoint);
    let sentences = run_blocking(move || {
        Ok(profile_text(&ckpt, &req.text, &req.lang, req.threshold.unwrap_or(0.0))?)
    })
    .await?;
    Ok(Json(ProfileResponse {
        sentences: sentences.into_iter().map(SentenceView::from).collect(),
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentRequest {
    pub id: String,
    pub text: String,
    pub lang: String,
    #[serde(default)]
    pub overwrite: bool,
}

/// Search hit and indexing acknowledgement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub id: String,
    pub lang: String,
    pub difficulty: String,
    pub gi_set: Vec<String>,
    pub snippet: String,
    pub sentences: usize,
    pub ingested_at: u64,
}

impl From<&DocumentRecord> for DocumentSummary {
    fn from(d: &DocumentRecord) -> Self {
        DocumentSummary {
            id: d.id.clone(),
            lang: d.lang.clone(),
            difficulty: d.difficulty.clone(),
            gi_set: d.gi_set.iter().cloned().collect(),
            snippet: d.snippet(),
            sentences: d.sentences.len(),
            ingested_at: d.ingested_at,
        }
    }
}

async fn add_document(
    State(state): State<Arc<AppState>>,
    body: Result<axum::body::Bytes, BytesRejection>,
) -> ApiResult<(StatusCode, Json<DocumentSummary>)> {
    let req: DocumentRequest = json_body(body, state.max_body)?;
    if req.text.len() > state.max_body {
        return Err(ApiError::too_large(state.max_body));
    }
    // Fail fast on a duplicate before paying for profiling; the insert below
    // re-checks under the write lock.
    if !req.overwrite && state.read_index()?.get(&req.id).is_some() {
        return Err(Error::DuplicateDocument(req.id).into());
    }
    let overwrite = req.overwrite;
    let ckpt = Arc::clone(&state.checkpoint);
    let record = run_blocking(move || Ok(index::profile_document(&ckpt, &req.id, &req.text, &req.lang)?)).await?;
    let summary = DocumentSummary::from(&record);

    let writer = Arc::clone(&state);
    run_blocking(move || {
        let mut index = writer.index.write().map_err(|_| ApiError::internal("index lock poisoned"))?;
        let previous = index.get(&record.id).cloned();
        let id = record.id.clone();
        index.insert(record, overwrite)?;
        if let Some(path) = &writer.index_path {
            if let Err(err) = index.save(path) {
                index.remove(&id);
                if let Some(previous) = previous {
                    index.insert(previous, false)?;
                }
                return Err(err.into());
            }
        }
        Ok(())
    })
    .await?;
    Ok((StatusCode::CREATED, Json(summary)))
}

#[derive(Debug, Default, Deserialize)]
pub struct SearchParams {
    pub gi: Option<String>,
    pub level: Option<String>,
    pub lang: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub documents: Vec<DocumentSummary>,
}

async fn search(
    State(state): State<Arc<AppState>>,
    params: Result<Query<SearchParams>, QueryRejection>,
) -> ApiResult<Json<SearchResponse>> {
    let Query(params) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    // Empty parameters (`?gi=&level=`) mean "no filter".
    let nonempty = |v: Option<String>| v.filter(|s| !s.is_empty());
    let query = index::Query {
        gi: nonempty(params.gi),
        level: nonempty(params.level),
        lang: nonempty(params.lang),
    };
    let index = state.read_index()?;
    let documents = index.search(&query)?.into_iter().map(DocumentSummary::from).collect();
    Ok(Json(SearchResponse { documents }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagEntry {
    /// Name as used in spans and search (`lang:name` for multilingual models).
    pub tag: String,
    /// Language namespace, when the model is namespaced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
    /// Name without the namespace.
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagsResponse {
    pub languages: Vec<String>,
    pub levels: Vec<String>,
    pub tags: Vec<TagEntry>,
}

/// Splits `lang:name` for namespaced models.
pub fn tag_entry(tag: &str, namespaced: bool, languages: &[String]) -> TagEntry {
    if namespaced {
        if let Some((lang, name)) = tag.split_once(':') {
            if languages.iter().any(|l| l == lang) {
                return TagEntry {
                    tag: tag.to_string(),
                    lang: Some(lang.to_string()),
                    name: name.to_string(),
                };
            }
        }
    }
    TagEntry {
        tag: tag.to_string(),
        lang: None,
        name: tag.to_string(),
    }
}

async fn tags(State(state): State<Arc<AppState>>) -> Json<TagsResponse> {
    let ckpt = &state.checkpoint;
    Json(TagsResponse {
        languages: ckpt.languages.clone(),
        levels: ckpt.levels.names().to_vec(),
        tags: ckpt
            .inventory
            .labels()
            .iter()
            .map(|t| tag_entry(t, ckpt.namespaced, &ckpt.languages))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model: String,
    pub documents: usize,
}

async fn health(State(state): State<Arc<AppState>>) -> ApiResult<Json<HealthResponse>> {
    Ok(Json(HealthResponse {
        status: "ok".into(),
        model: state.checksum.clone(),
        documents: state.read_index()?.len(),
    }))
}
