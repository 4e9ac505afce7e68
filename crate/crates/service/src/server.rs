//! HTTP front end of the queue.

use std::net::{SocketAddr, TcpListener};
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::Value;
use tokio::sync::oneshot;

use crate::api::{ErrorBody, OpenBatch, RunUpdate};
use crate::catalog::SampleCatalog;
use crate::clock::{Clock, SystemClock};
use crate::queue::{Queue, QueueError, DEFAULT_LEASE};

pub struct ServiceConfig {
    pub catalog: Option<SampleCatalog>,
    pub clock: Arc<dyn Clock>,
    pub lease: Duration,
    /// Directory holding the built annotation UI, served at `/`.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            catalog: None,
            clock: Arc::new(SystemClock::new()),
            lease: DEFAULT_LEASE,
            ui_dir: None,
        }
    }
}

#[derive(Clone)]
struct AppState {
    queue: Arc<Mutex<Queue>>,
    clock: Arc<dyn Clock>,
    ui_dir: Option<Arc<PathBuf>>,
}

impl AppState {
    fn queue(&self) -> MutexGuard<'_, Queue> {
        // Every queue method validates before mutating, so a poisoned lock
        // still guards a consistent queue.
        self.queue.lock().unwrap_or_else(|e| e.into_inner())
    }
}

struct ApiError(StatusCode, String);

impl From<QueueError> for ApiError {
    fn from(e: QueueError) -> Self {
        let code = match e {
            QueueError::NoActiveRun | QueueError::AlreadyDone(_) | QueueError::Conflict(_) => StatusCode::CONFLICT,
            QueueError::UnknownTask(_) | QueueError::UnknownBatch(_) => StatusCode::NOT_FOUND,
            QueueError::InvalidRating(_) => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("invalid request body: {e}")))
}

async fn next_task(State(s): State<AppState>) -> Result<Response, ApiError> {
    let now = s.clock.now();
    match s.queue().next_task(now)? {
        Some(task) => Ok(Json(task).into_response()),
        None => Ok(StatusCode::NO_CONTENT.into_response()),
    }
}

async fn rate(State(s): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<crate::queue::AnnotationTask> {
    // Unparseable bodies are invalid ratings, reported after unknown tasks.
    let value: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    Ok(Json(s.queue().submit(&id, &value)?))
}

async fn status(State(s): State<AppState>) -> ApiResult<crate::api::RunStatus> {
    Ok(Json(s.queue().status()?))
}

async fn run_start(State(s): State<AppState>, body: Bytes) -> ApiResult<crate::api::RunStatus> {
    let update: RunUpdate = parse_json(&body)?;
    Ok(Json(s.queue().start(update)))
}

async fn run_update(State(s): State<AppState>, body: Bytes) -> ApiResult<crate::api::RunStatus> {
    let update: RunUpdate = parse_json(&body)?;
    Ok(Json(s.queue().update(update)?))
}

async fn run_finish(State(s): State<AppState>, body: Bytes) -> ApiResult<crate::api::RunStatus> {
    let update: RunUpdate = parse_json(&body)?;
    Ok(Json(s.queue().finish(update)?))
}

async fn open_batch(State(s): State<AppState>, body: Bytes) -> ApiResult<crate::api::BatchInfo> {
    let request: OpenBatch = parse_json(&body)?;
    Ok(Json(s.queue().open_batch(request)?))
}

async fn batch_progress(State(s): State<AppState>, UrlPath(id): UrlPath<u64>) -> ApiResult<crate::api::BatchProgress> {
    Ok(Json(s.queue().progress(id)?))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("ico") => "image/x-icon",
        _ => "application/octet-stream",
    }
}

async fn static_ui(State(s): State<AppState>, uri: Uri) -> Response {
    let Some(root) = s.ui_dir.as_deref() else {
        return StatusCode::NOT_FOUND.into_response();
    };
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let rel = Path::new(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return StatusCode::NOT_FOUND.into_response();
    }
    let path = root.join(rel);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

/// The service's routes, with a fresh queue.
pub fn router(config: ServiceConfig) -> Router {
    let state = AppState {
        queue: Arc::new(Mutex::new(Queue::new(config.catalog, config.lease))),
        clock: config.clock,
        ui_dir: config.ui_dir.map(Arc::new),
    };
    Router::new()
        .route("/api/task/next", get(next_task))
        .route("/api/task/{id}/rating", post(rate))
        .route("/api/status", get(status))
        .route("/api/run/start", post(run_start))
        .route("/api/run/status", post(run_update))
        .route("/api/run/finish", post(run_finish))
        .route("/api/run/batch", post(open_batch))
        .route("/api/run/batch/{id}", get(batch_progress))
        .fallback(static_ui)
        .with_state(state)
}

/// A server running on its own threads. Dropping the handle shuts it down.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Block until the server stops on its own (it only does on error).
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Bind `addr` and serve in the background. Port 0 picks a free port.
pub fn spawn(addr: &str, config: ServiceConfig) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let app = router(config);
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            let listener = match tokio::net::TcpListener::from_std(listener) {
                Ok(l) => l,
                Err(e) => {
                    eprintln!("annotation service: {e}");
                    return;
                }
            };
            let shutdown = async {
                let _ = rx.await;
            };
            if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
                eprintln!("annotation service: {e}");
            }
        });
    });
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
