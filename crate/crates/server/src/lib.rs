//! Read-only HTTP/JSON API over the latest version of an ingested workspace.
//!
//! Every response body is either a persisted artifact served verbatim or
//! canonical JSON derived from persisted artifacts at request time (styling
//! at the requested threshold). Nothing is ever written.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use resil_core::canonical;
use resil_core::workspace::{ExportFormat, Snapshot, View, Workspace, WorkspaceError};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;

/// Machine-readable error body.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

struct Failure {
    status: StatusCode,
    body: ApiError,
}

impl Failure {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Failure {
            status,
            body: ApiError {
                code: code.to_string(),
                message: message.into(),
            },
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Failure::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl From<WorkspaceError> for Failure {
    fn from(e: WorkspaceError) -> Self {
        let message = e.to_string();
        match e {
            WorkspaceError::NotFound(_) => {
                Failure::new(StatusCode::NOT_FOUND, "not_found", message)
            }
            WorkspaceError::BadRequest(_) => Failure::bad_request(message),
            WorkspaceError::Corrupt { .. } => Failure::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "corrupt_artifact",
                message,
            ),
            WorkspaceError::NotIngested(_) => {
                Failure::new(StatusCode::SERVICE_UNAVAILABLE, "not_ingested", message)
            }
            _ => Failure::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        let body = canonical::to_vec(&self.body).unwrap_or_default();
        (
            self.status,
            [(
                header::CONTENT_TYPE,
                HeaderValue::from_static("application/json"),
            )],
            body,
        )
            .into_response()
    }
}

const JSON: &str = "application/json";

fn bytes(content_type: &'static str, body: Vec<u8>) -> Response {
    (
        [(header::CONTENT_TYPE, HeaderValue::from_static(content_type))],
        body,
    )
        .into_response()
}

fn json<T: Serialize>(value: &T) -> Result<Response, Failure> {
    let body = canonical::to_vec(value)
        .map_err(|e| Failure::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    Ok(bytes(JSON, body))
}

type Shared = Arc<Snapshot>;
type Params = Query<HashMap<String, String>>;

/// Filesystem reads happen off the async workers.
async fn blocking<F>(snap: Shared, f: F) -> Response
where
    F: FnOnce(&Snapshot) -> Result<Response, Failure> + Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(&snap)).await {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => e.into_response(),
        Err(e) => Failure::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
            .into_response(),
    }
}

fn parse_param<T: std::str::FromStr>(
    params: &HashMap<String, String>,
    name: &str,
) -> Result<Option<T>, Failure> {
    params
        .get(name)
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| Failure::bad_request(format!("invalid value `{v}` for `{name}`")))
        })
        .transpose()
}

fn parse_index(raw: &str) -> Result<usize, Failure> {
    raw.parse().map_err(|_| {
        Failure::bad_request(format!(
            "function index `{raw}` is not a non-negative integer"
        ))
    })
}

fn threshold(params: &HashMap<String, String>) -> Result<u64, Failure> {
    Ok(parse_param(params, "threshold")?.unwrap_or(0))
}

fn view(params: &HashMap<String, String>) -> Result<View, Failure> {
    Ok(parse_param::<View>(params, "view")?.unwrap_or(View::Diff))
}

async fn runs(State(s): State<Shared>) -> Response {
    blocking(s, |snap| json(&snap.run_list())).await
}

async fn manifest(State(s): State<Shared>) -> Response {
    blocking(s, |snap| {
        Ok(bytes(
            JSON,
            snap.read_raw(resil_core::workspace::MANIFEST_FILE)?,
        ))
    })
    .await
}

async fn symbols(State(s): State<Shared>) -> Response {
    blocking(s, |snap| Ok(bytes(JSON, snap.read_raw("symbols.json")?))).await
}

async fn summary(State(s): State<Shared>) -> Response {
    blocking(s, |snap| Ok(bytes(JSON, snap.read_raw("summary.json")?))).await
}

async fn functions(State(s): State<Shared>, UrlPath(run): UrlPath<String>) -> Response {
    blocking(s, move |snap| {
        snap.statuses(&run)?;
        Ok(bytes(JSON, snap.read_raw(&snap.status_path(&run)?)?))
    })
    .await
}

async fn graph(
    State(s): State<Shared>,
    UrlPath((run, index)): UrlPath<(String, String)>,
    Query(p): Params,
) -> Response {
    blocking(s, move |snap| {
        let f = parse_index(&index)?;
        json(&snap.styled_graph(&run, f, view(&p)?, threshold(&p)?)?)
    })
    .await
}

async fn diff(
    State(s): State<Shared>,
    UrlPath((run, index)): UrlPath<(String, String)>,
) -> Response {
    blocking(s, move |snap| {
        let f = parse_index(&index)?;
        snap.diff(&run, f)?;
        Ok(bytes(JSON, snap.read_raw(&snap.diff_path(&run, f)?)?))
    })
    .await
}

async fn lsg(
    State(s): State<Shared>,
    UrlPath((run, index)): UrlPath<(String, String)>,
) -> Response {
    blocking(s, move |snap| {
        let f = parse_index(&index)?;
        snap.lsg(&run, f)?;
        Ok(bytes(JSON, snap.read_raw(&snap.lsg_path(&run, f)?)?))
    })
    .await
}

async fn export(
    State(s): State<Shared>,
    UrlPath((run, index)): UrlPath<(String, String)>,
    Query(p): Params,
) -> Response {
    blocking(s, move |snap| {
        let f = parse_index(&index)?;
        let format = parse_param::<ExportFormat>(&p, "format")?.unwrap_or(ExportFormat::Json);
        let body = snap.export(&run, f, format, threshold(&p)?, view(&p)?)?;
        let content_type = match format {
            ExportFormat::Json => JSON,
            ExportFormat::Svg => "image/svg+xml",
            ExportFormat::Dot => "text/vnd.graphviz",
        };
        Ok(bytes(content_type, body))
    })
    .await
}

async fn cvg(
    State(s): State<Shared>,
    UrlPath(index): UrlPath<String>,
    Query(p): Params,
) -> Response {
    blocking(s, move |snap| {
        json(&snap.cvg_styled(parse_index(&index)?, threshold(&p)?)?)
    })
    .await
}

async fn cvg_vectors(State(s): State<Shared>, UrlPath(index): UrlPath<String>) -> Response {
    blocking(s, move |snap| {
        let f = parse_index(&index)?;
        snap.cvg(f)?;
        Ok(bytes(JSON, snap.read_raw(&snap.cvg_path(f)?)?))
    })
    .await
}

async fn ranking(State(s): State<Shared>, Query(p): Params) -> Response {
    blocking(s, move |snap| {
        let top = parse_param::<usize>(&p, "top")?;
        match parse_param::<usize>(&p, "function")? {
            Some(f) => {
                let cvg = snap.cvg(f)?;
                json(&resil_core::criticality_ranking(
                    &cvg,
                    top.unwrap_or(usize::MAX),
                ))
            }
            None => json(&snap.ranking(top)?),
        }
    })
    .await
}

async fn unknown_api() -> Response {
    Failure::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint").into_response()
}

/// Routes over one immutable snapshot. With `assets`, other paths are served
/// from that directory (the browser front end).
pub fn router(snapshot: Snapshot, assets: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/runs", get(runs))
        .route("/manifest", get(manifest))
        .route("/symbols", get(symbols))
        .route("/summary", get(summary))
        .route("/runs/{id}/functions", get(functions))
        .route("/runs/{id}/functions/{index}/graph", get(graph))
        .route("/runs/{id}/functions/{index}/diff", get(diff))
        .route("/runs/{id}/functions/{index}/lsg", get(lsg))
        .route("/runs/{id}/functions/{index}/export", get(export))
        .route("/campaign/cvg/{index}", get(cvg))
        .route("/campaign/cvg/{index}/vectors", get(cvg_vectors))
        .route("/campaign/ranking", get(ranking))
        .fallback(unknown_api)
        .with_state(Arc::new(snapshot));
    let app = Router::new().nest("/api", api);
    match assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
}

/// A server running in the background.
pub struct RunningServer {
    pub local_addr: SocketAddr,
    pub version_dir: PathBuf,
    handle: JoinHandle<std::io::Result<()>>,
}

impl RunningServer {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.local_addr)
    }

    /// Runs until the server stops.
    pub async fn wait(self) -> Result<(), ServeError> {
        match self.handle.await {
            Ok(r) => Ok(r?),
            Err(e) => Err(ServeError::Io(std::io::Error::other(e))),
        }
    }

    pub fn abort(&self) {
        self.handle.abort();
    }
}

/// Opens the latest version of `workspace` and serves it on `addr`
/// (port 0 picks a free port).
pub async fn start(
    workspace: &Path,
    addr: SocketAddr,
    assets: Option<&Path>,
) -> Result<RunningServer, ServeError> {
    let snapshot = Workspace::new(workspace).latest()?;
    let version_dir = snapshot.dir().to_path_buf();
    let app = router(snapshot, assets);
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    let local_addr = listener.local_addr()?;
    tracing::info!(%local_addr, version = %version_dir.display(), "serving");
    let handle = tokio::spawn(async move { axum::serve(listener, app).await });
    Ok(RunningServer {
        local_addr,
        version_dir,
        handle,
    })
}
