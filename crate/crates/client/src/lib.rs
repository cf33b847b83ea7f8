//! Async client for the analysis service. Every call has a raw variant that
//! returns the response body untouched, so callers can compare bytes.

use resil_core::layout::StyledGraph;
use resil_core::workspace::{ExportFormat, RunList, View};
use resil_core::{DiffLsg, FunctionRecord, FunctionStatus, RankedEdge};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server returned {status} ({code}): {message}")]
    Api {
        status: u16,
        code: String,
        message: String,
    },
    #[error("unexpected response body: {0}")]
    Decode(#[from] serde_json::Error),
}

#[derive(Deserialize)]
struct ErrorBody {
    code: String,
    message: String,
}

fn format_name(f: ExportFormat) -> &'static str {
    match f {
        ExportFormat::Json => "json",
        ExportFormat::Svg => "svg",
        ExportFormat::Dot => "dot",
    }
}

fn view_name(v: View) -> &'static str {
    match v {
        View::Diff => "diff",
        View::Global => "global",
    }
}

#[derive(Clone, Debug)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base_url` such as `http://127.0.0.1:8080`.
    pub fn new(base_url: impl Into<String>) -> Self {
        Client {
            base: base_url.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    /// GET `path` (starting with `/api/`) and return the body bytes.
    pub async fn get_raw(&self, path: &str) -> Result<Vec<u8>, ClientError> {
        let resp = self
            .http
            .get(format!("{}{}", self.base, path))
            .send()
            .await?;
        let status = resp.status();
        let body = resp.bytes().await?.to_vec();
        if status.is_success() {
            return Ok(body);
        }
        let (code, message) = match serde_json::from_slice::<ErrorBody>(&body) {
            Ok(e) => (e.code, e.message),
            Err(_) => ("http".into(), String::from_utf8_lossy(&body).into_owned()),
        };
        Err(ClientError::Api {
            status: status.as_u16(),
            code,
            message,
        })
    }

    async fn get_json<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Ok(serde_json::from_slice(&self.get_raw(path).await?)?)
    }

    pub async fn runs(&self) -> Result<RunList, ClientError> {
        self.get_json("/api/runs").await
    }

    pub async fn symbols(&self) -> Result<Vec<FunctionRecord>, ClientError> {
        self.get_json("/api/symbols").await
    }

    pub async fn functions(&self, run_id: &str) -> Result<Vec<FunctionStatus>, ClientError> {
        self.get_json(&format!("/api/runs/{run_id}/functions"))
            .await
    }

    pub fn graph_path(run_id: &str, function: usize, threshold: u64, view: View) -> String {
        format!(
            "/api/runs/{run_id}/functions/{function}/graph?threshold={threshold}&view={}",
            view_name(view)
        )
    }

    pub async fn graph(
        &self,
        run_id: &str,
        function: usize,
        threshold: u64,
        view: View,
    ) -> Result<StyledGraph, ClientError> {
        self.get_json(&Self::graph_path(run_id, function, threshold, view))
            .await
    }

    pub async fn diff(&self, run_id: &str, function: usize) -> Result<DiffLsg, ClientError> {
        self.get_json(&format!("/api/runs/{run_id}/functions/{function}/diff"))
            .await
    }

    pub fn export_path(
        run_id: &str,
        function: usize,
        format: ExportFormat,
        threshold: u64,
        view: View,
    ) -> String {
        format!(
            "/api/runs/{run_id}/functions/{function}/export?format={}&threshold={threshold}&view={}",
            format_name(format),
            view_name(view)
        )
    }

    pub async fn export(
        &self,
        run_id: &str,
        function: usize,
        format: ExportFormat,
        threshold: u64,
        view: View,
    ) -> Result<Vec<u8>, ClientError> {
        self.get_raw(&Self::export_path(
            run_id, function, format, threshold, view,
        ))
        .await
    }

    pub async fn cvg(&self, function: usize, threshold: u64) -> Result<StyledGraph, ClientError> {
        self.get_json(&format!(
            "/api/campaign/cvg/{function}?threshold={threshold}"
        ))
        .await
    }

    pub fn ranking_path(top: Option<usize>, function: Option<usize>) -> String {
        let mut query = Vec::new();
        if let Some(k) = top {
            query.push(format!("top={k}"));
        }
        if let Some(f) = function {
            query.push(format!("function={f}"));
        }
        if query.is_empty() {
            "/api/campaign/ranking".into()
        } else {
            format!("/api/campaign/ranking?{}", query.join("&"))
        }
    }

    pub async fn ranking(
        &self,
        top: Option<usize>,
        function: Option<usize>,
    ) -> Result<Vec<RankedEdge>, ClientError> {
        self.get_json(&Self::ranking_path(top, function)).await
    }
}
