//! JSON HTTP API over the pipeline.
//!
//! The index is loaded once in the background after the listener is up;
//! `/api/status` reports `loading` until it is ready. Afterwards every
//! handler reads the shared engine without locking.

use std::future::Future;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use crate::index::{self, IndexError, IndexParams};
use crate::pipeline::{AskOptions, Engine, PipelineError, ReaderMode, DEFAULT_ANSWERS};
use crate::reader::{ReaderError, RemoteReader};
use crate::retriever::DEFAULT_TOP_K;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid service config: {0}")]
    Config(String),
    #[error("cannot load index: {0}")]
    Index(#[from] IndexError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub index_path: PathBuf,
    pub reader_mode: ReaderMode,
    pub remote_reader_url: String,
    pub k_docs: usize,
    pub n_answers: usize,
    pub cors_allowed_origins: Vec<String>,
    /// Per-request timeout for remote reader calls.
    pub remote_timeout_secs: u64,
    /// BM25 k1/b used at query time; a `[bm25]` table needs both keys.
    pub bm25: IndexParams,
    /// Directory of static UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            index_path: PathBuf::new(),
            reader_mode: ReaderMode::Baseline,
            remote_reader_url: String::new(),
            k_docs: DEFAULT_TOP_K,
            n_answers: DEFAULT_ANSWERS,
            cors_allowed_origins: vec!["http://localhost:5173".into()],
            remote_timeout_secs: 30,
            bm25: IndexParams::default(),
            static_dir: None,
        }
    }
}

impl ServiceConfig {
    /// Reads a TOML config, or JSON when the file ends in `.json`.
    pub fn from_file(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if is_json {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies the `ASKSPORT_*` overrides from the process environment.
    pub fn apply_env(&mut self) -> Result<(), ServiceError> {
        self.apply_env_from(|k| std::env::var(k).ok())
    }

    pub fn apply_env_from(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        if let Some(v) = lookup("ASKSPORT_INDEX_PATH") {
            self.index_path = v.into();
        }
        if let Some(v) = lookup("ASKSPORT_PORT") {
            self.port = v
                .trim()
                .parse()
                .map_err(|_| ServiceError::Config(format!("ASKSPORT_PORT={v:?} is not a port number")))?;
        }
        if let Some(v) = lookup("ASKSPORT_READER_MODE") {
            self.reader_mode = v.trim().parse().map_err(ServiceError::Config)?;
        }
        if let Some(v) = lookup("ASKSPORT_REMOTE_READER_URL") {
            self.remote_reader_url = v;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.port == 0 {
            return Err(ServiceError::Config("port must be in 1..=65535".into()));
        }
        if self.index_path.as_os_str().is_empty() {
            return Err(ServiceError::Config("index_path is required".into()));
        }
        std::fs::File::open(&self.index_path).map_err(|e| {
            ServiceError::Config(format!("index_path {} is not readable: {e}", self.index_path.display()))
        })?;
        if self.reader_mode != ReaderMode::Baseline && self.remote_reader_url.trim().is_empty() {
            return Err(ServiceError::Config(format!(
                "reader_mode {} needs remote_reader_url",
                self.reader_mode
            )));
        }
        AskOptions {
            k_docs: self.k_docs,
            n_answers: self.n_answers,
        }
        .validate()?;
        self.bm25.validate()?;
        for origin in &self.cors_allowed_origins {
            HeaderValue::from_str(origin).map_err(|_| ServiceError::Config(format!("bad CORS origin {origin:?}")))?;
        }
        Ok(())
    }

    fn remote_reader(&self) -> Result<Option<RemoteReader>, ServiceError> {
        if self.reader_mode == ReaderMode::Baseline {
            return Ok(None);
        }
        RemoteReader::new(&self.remote_reader_url, Duration::from_secs(self.remote_timeout_secs))
            .map(Some)
            .map_err(|e| ServiceError::Config(e.to_string()))
    }
}

/// Shared handler state.
#[derive(Debug)]
pub struct AppState {
    engine: OnceLock<Engine>,
    corpus: OnceLock<String>,
    reader_mode: ReaderMode,
    defaults: AskOptions,
}

impl AppState {
    pub fn loading(reader_mode: ReaderMode, defaults: AskOptions) -> Self {
        Self {
            engine: OnceLock::new(),
            corpus: OnceLock::new(),
            reader_mode,
            defaults,
        }
    }

    /// Publishes the engine; later calls are ignored.
    pub fn set_ready(&self, engine: Engine) {
        let tags = engine.index().source_tags().join(",");
        let _ = self.corpus.set(tags);
        let _ = self.engine.set(engine);
    }

    pub fn engine(&self) -> Option<&Engine> {
        self.engine.get()
    }
}

#[derive(Debug, Deserialize)]
struct AskRequest {
    question: String,
    k_docs: Option<usize>,
    n_answers: Option<usize>,
}

#[derive(Debug, Serialize)]
struct StatusBody<'a> {
    state: &'a str,
    doc_count: usize,
    corpus: &'a str,
    reader_mode: &'a str,
}

fn error_body(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn not_ready() -> Response {
    error_body(StatusCode::SERVICE_UNAVAILABLE, "index is still loading")
}

async fn ask(State(state): State<Arc<AppState>>, body: Result<Json<AskRequest>, JsonRejection>) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(rejection) => return error_body(StatusCode::BAD_REQUEST, rejection.body_text()),
    };
    let Some(engine) = state.engine() else {
        return not_ready();
    };
    let opts = AskOptions {
        k_docs: req.k_docs.unwrap_or(state.defaults.k_docs),
        n_answers: req.n_answers.unwrap_or(state.defaults.n_answers),
    };
    match engine.ask(&req.question, opts).await {
        Ok(resp) => Json(resp).into_response(),
        Err(PipelineError::InvalidRequest(m)) => error_body(StatusCode::BAD_REQUEST, m),
        Err(PipelineError::Reader(e @ ReaderError::Unavailable(_))) => {
            error_body(StatusCode::SERVICE_UNAVAILABLE, e.to_string())
        }
        Err(PipelineError::Reader(e)) => error_body(StatusCode::BAD_GATEWAY, e.to_string()),
        Err(e) => error_body(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn status(State(state): State<Arc<AppState>>) -> Response {
    let body = match state.engine() {
        None => StatusBody {
            state: "loading",
            doc_count: 0,
            corpus: "",
            reader_mode: state.reader_mode.as_str(),
        },
        Some(engine) => StatusBody {
            state: "ready",
            doc_count: engine.index().n_docs(),
            corpus: state.corpus.get().map(String::as_str).unwrap_or(""),
            reader_mode: state.reader_mode.as_str(),
        },
    };
    Json(body).into_response()
}

async fn document(State(state): State<Arc<AppState>>, UrlPath(doc_id): UrlPath<String>) -> Response {
    let Some(engine) = state.engine() else {
        return not_ready();
    };
    match engine.index().get_document(&doc_id) {
        Some(doc) => Json(doc).into_response(),
        None => error_body(StatusCode::NOT_FOUND, format!("no document with id {doc_id:?}")),
    }
}

async fn health() -> Response {
    Json(json!({ "status": "ok" })).into_response()
}

/// API routes without CORS or static files.
pub fn api_router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/ask", post(ask))
        .route("/api/status", get(status))
        .route("/api/document/{*doc_id}", get(document))
        .route("/api/health", get(health))
        .with_state(state)
}

fn cors_layer(origins: &[String]) -> CorsLayer {
    let origins: Vec<HeaderValue> = origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
    CorsLayer::new()
        .allow_origin(AllowOrigin::list(origins))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE])
}

pub fn router(state: Arc<AppState>, config: &ServiceConfig) -> Router {
    let mut app = api_router(state).layer(cors_layer(&config.cors_allowed_origins));
    if let Some(dir) = &config.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app
}

/// Binds `host:port` from the config and serves until SIGINT/SIGTERM.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    config.validate()?;
    let listener = TcpListener::bind((config.host.as_str(), config.port)).await?;
    serve_on(listener, config, shutdown_signal()).await
}

/// Serves on an already-bound listener until `shutdown` resolves or the
/// index fails to load. In-flight requests finish before returning.
pub async fn serve_on(
    listener: TcpListener,
    config: ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let remote = config.remote_reader()?;
    let defaults = AskOptions {
        k_docs: config.k_docs,
        n_answers: config.n_answers,
    };
    let state = Arc::new(AppState::loading(config.reader_mode, defaults));
    let app = router(state.clone(), &config);
    let addr: SocketAddr = listener.local_addr()?;
    tracing::info!("listening on http://{addr}, loading {}", config.index_path.display());

    let (failed_tx, failed_rx) = tokio::sync::oneshot::channel::<ServiceError>();
    let loader_state = state.clone();
    let index_path = config.index_path.clone();
    let mode = config.reader_mode;
    let bm25 = config.bm25;
    tokio::spawn(async move {
        let loaded = tokio::task::spawn_blocking(move || index::load_index(&index_path)).await;
        let result = match loaded {
            Ok(Ok(index)) => Engine::new(Arc::new(index))
                .with_bm25(bm25)
                .with_mode(mode, remote)
                .map_err(ServiceError::from),
            Ok(Err(e)) => Err(e.into()),
            Err(join) => Err(ServiceError::Config(format!("index loader panicked: {join}"))),
        };
        match result {
            Ok(engine) => {
                tracing::info!("index ready: {} documents", engine.index().n_docs());
                loader_state.set_ready(engine);
            }
            Err(e) => {
                let _ = failed_tx.send(e);
            }
        }
    });

    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<ServiceError>();
    let stop = async move {
        tokio::pin!(shutdown);
        tokio::select! {
            _ = &mut shutdown => {}
            failed = failed_rx => match failed {
                Ok(e) => {
                    tracing::error!("startup failed: {e}");
                    let _ = stop_tx.send(e);
                }
                // loader succeeded and dropped its sender
                Err(_) => shutdown.await,
            },
        }
    };
    axum::serve(listener, app).with_graceful_shutdown(stop).await?;
    match stop_rx.await {
        Ok(e) => Err(e),
        Err(_) => Ok(()),
    }
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = terminate => {},
    }
    tracing::info!("shutting down");
}
