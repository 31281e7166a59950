//! HTTP front end for the identification pipeline and the feedback store.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use docloop_core::dataset;
use docloop_core::feedback::{decode_base64, FeedbackStore};
use docloop_core::manifest::ManifestIndex;
use docloop_core::pipeline::Pipeline;
use docloop_core::templates::Registry;
use docloop_core::{DocumentClass, Error, ImageRef};
use serde::Serialize;
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

pub const INVALID_JSON: &str = "Invalid input, JSON expected";
pub const SUCCESS: &str = "Request processed successfully.";
pub const DEFAULT_PORT: u16 = 5000;

const BODY_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub requests_dir: PathBuf,
    pub rejected_root: PathBuf,
    pub templates_dir: Option<PathBuf>,
    /// Dataset whose `manifests.jsonl` backs the oracle backends.
    pub dataset_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            requests_dir: PathBuf::from("./modification_requests"),
            rejected_root: PathBuf::from("./rejected_pipeline"),
            templates_dir: None,
            dataset_dir: None,
        }
    }
}

impl ServiceConfig {
    /// Defaults overridden by REQUESTS_DIR, REJECTED_DIR, TEMPLATES_DIR and
    /// DATASET_DIR.
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var_os(k).filter(|v| !v.is_empty()).map(PathBuf::from);
        let d = ServiceConfig::default();
        ServiceConfig {
            requests_dir: var("REQUESTS_DIR").unwrap_or(d.requests_dir),
            rejected_root: var("REJECTED_DIR").unwrap_or(d.rejected_root),
            templates_dir: var("TEMPLATES_DIR"),
            dataset_dir: var("DATASET_DIR"),
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pipeline: Pipeline,
    store: Arc<FeedbackStore>,
}

impl AppState {
    pub fn new(pipeline: Pipeline, store: FeedbackStore) -> Self {
        AppState {
            pipeline,
            store: Arc::new(store),
        }
    }

    /// Oracle backends over the configured dataset's manifests. Without a
    /// dataset every image is unresolvable.
    pub fn oracle(cfg: &ServiceConfig) -> docloop_core::Result<Self> {
        let registry = match &cfg.templates_dir {
            Some(dir) => Registry::load_dir(dir)?,
            None => Registry::bundled(),
        };
        let index = match &cfg.dataset_dir {
            Some(dir) => ManifestIndex::load_jsonl(dataset::manifests_path(dir))?,
            None => ManifestIndex::new(),
        };
        log::info!("oracle index holds {} manifests", index.len());
        let pipeline = Pipeline::oracle(Arc::new(index), Arc::new(registry));
        let store = FeedbackStore::open(&cfg.requests_dir, &cfg.rejected_root)?;
        Ok(AppState::new(pipeline, store))
    }

    pub fn store(&self) -> &FeedbackStore {
        &self.store
    }
}

/// Error reply: always `{"error": "..."}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn invalid_json() -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, INVALID_JSON)
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::NoDocumentFound => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("UnresolvableImage: {e}"),
            ),
            e => ApiError::internal(format!("{}: {e}", e.kind())),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Any JSON value except `null`, as the reference handlers require.
fn parse_body(body: &Bytes) -> ApiResult<Value> {
    match serde_json::from_slice::<Value>(body) {
        Ok(Value::Null) | Err(_) => Err(ApiError::invalid_json()),
        Ok(v) => Ok(v),
    }
}

fn field<'a>(body: &'a Value, key: &str) -> ApiResult<&'a Value> {
    body.get(key)
        .ok_or_else(|| ApiError::internal(format!("KeyError: missing key {key:?}")))
}

fn string_field<'a>(body: &'a Value, key: &str) -> ApiResult<&'a str> {
    field(body, key)?
        .as_str()
        .ok_or_else(|| ApiError::internal(format!("TypeError: {key:?} must be a string")))
}

fn req_id(body: &Value) -> ApiResult<i64> {
    let v = field(body, "req_id")?;
    v.as_i64()
        .or_else(|| v.as_str().and_then(|s| s.trim().parse().ok()))
        .ok_or_else(|| ApiError::internal(format!("ValueError: bad req_id {v}")))
}

fn decode_image(body: &Value) -> ApiResult<ImageRef> {
    let bytes = decode_base64(string_field(body, "image")?)?;
    Ok(ImageRef::decode(&bytes)?)
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn message() -> Json<Value> {
    Json(json!({ "message": SUCCESS }))
}

#[derive(Debug, Serialize)]
struct Identified {
    class_id: DocumentClass,
    confidence: f64,
}

#[derive(Debug, Serialize)]
struct FieldText {
    code: String,
    text: String,
}

#[derive(Debug, Serialize)]
struct Extracted {
    class_id: DocumentClass,
    confidence: f64,
    fields: Vec<FieldText>,
    serialized: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error_detail: Option<&'static str>,
}

async fn identify(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<Identified>> {
    let body = parse_body(&body)?;
    blocking(move || {
        let img = decode_image(&body)?;
        let d = state.pipeline.identify(&img)?;
        Ok(Json(Identified {
            class_id: d.class,
            confidence: d.confidence,
        }))
    })
    .await
}

async fn extract(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<Extracted>> {
    let body = parse_body(&body)?;
    blocking(move || {
        let img = decode_image(&body)?;
        let d = state.pipeline.identify(&img)?;
        match state.pipeline.extract(&img, Some(d.class)) {
            Ok(r) => Ok(Json(Extracted {
                class_id: r.class_id,
                confidence: d.confidence,
                fields: r
                    .fields
                    .into_iter()
                    .map(|(code, text)| FieldText { code, text })
                    .collect(),
                serialized: r.serialized,
                error_detail: None,
            })),
            Err(Error::AnchorNotFound(_) | Error::DegenerateAnchor(_)) => Ok(Json(Extracted {
                class_id: d.class,
                confidence: d.confidence,
                fields: Vec::new(),
                serialized: String::new(),
                error_detail: Some("anchor_not_found"),
            })),
            Err(e) => Err(e.into()),
        }
    })
    .await
}

async fn propose(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let body = parse_body(&body)?;
    blocking(move || {
        let identified = string_field(&body, "document_identified")?;
        let suggested = string_field(&body, "document_suggested")?;
        let image = string_field(&body, "image")?;
        let id = state.store.propose(identified, suggested, image)?;
        log::info!("stored modification request {id}");
        Ok(message())
    })
    .await
}

async fn get_all(State(state): State<AppState>) -> ApiResult<Json<Value>> {
    blocking(move || {
        let list = state.store.list_requests()?;
        serde_json::to_value(list)
            .map(Json)
            .map_err(|e| ApiError::internal(e.to_string()))
    })
    .await
}

async fn reject(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let body = parse_body(&body)?;
    blocking(move || {
        state.store.reject(req_id(&body)?)?;
        Ok(message())
    })
    .await
}

async fn approve(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let body = parse_body(&body)?;
    blocking(move || {
        let entry = state.store.approve(req_id(&body)?)?;
        log::info!("approved request {} into {}", entry.origin_req_id, entry.path.display());
        Ok(message())
    })
    .await
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "Method Not Allowed")
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "Not Found")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/document/identify", post(identify).fallback(method_not_allowed))
        .route("/document/extract/data", post(extract).fallback(method_not_allowed))
        .route("/document/propose/modification", post(propose).fallback(method_not_allowed))
        .route("/document/request/getAll", post(get_all).fallback(method_not_allowed))
        .route("/document/request/reject", post(reject).fallback(method_not_allowed))
        .route("/document/request/approve", post(approve).fallback(method_not_allowed))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
