//! HTTP JSON access to the toolbox for processes outside this one.
//!
//! `POST /tools/call` takes a [`ToolRequest`] and answers with a
//! [`ToolResponse`]; tool failures come back as `200` with `ok: false`.
//! `GET /tools/specs` serves the registry schema and `GET /healthz` the
//! index content hashes.

use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tokio::sync::oneshot;

use crate::error::{Error, Result};
use crate::retry::{self, Attempt, RetryPolicy};
use crate::toolbox::{Observation, ToolCall, Toolbox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRequest {
    pub tool: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
    pub request_id: String,
}

impl ToolRequest {
    pub fn new(request_id: impl Into<String>, call: &ToolCall) -> Self {
        ToolRequest {
            tool: call.name.clone(),
            arguments: call.arguments.clone(),
            request_id: request_id.into(),
        }
    }

    pub fn to_call(&self) -> ToolCall {
        ToolCall {
            name: self.tool.clone(),
            arguments: self.arguments.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResponse {
    pub request_id: String,
    pub ok: bool,
    pub payload: String,
    #[serde(default)]
    pub error: Option<String>,
}

impl ToolResponse {
    pub fn from_observation(request_id: String, obs: Observation) -> Self {
        ToolResponse {
            request_id,
            ok: obs.ok,
            payload: obs.payload,
            error: obs.error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub bind: String,
    /// Environment variable with the bearer token; unset or empty disables auth.
    pub token_env: Option<String>,
    pub log_path: Option<PathBuf>,
    pub log_max_bytes: u64,
    /// Rotated log files kept next to the live one.
    pub log_keep: usize,
    pub worker_threads: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            bind: "127.0.0.1:8700".into(),
            token_env: Some("TOOLREC_GATEWAY_TOKEN".into()),
            log_path: None,
            log_max_bytes: 10 * 1024 * 1024,
            log_keep: 3,
            worker_threads: 4,
        }
    }
}

/// Size-rotated JSONL request log: `log`, `log.1`, … `log.{keep}`.
#[derive(Debug)]
pub struct RequestLog {
    path: PathBuf,
    max_bytes: u64,
    keep: usize,
    file: Mutex<(File, u64)>,
}

impl RequestLog {
    pub fn open(path: PathBuf, max_bytes: u64, keep: usize) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        let len = f.metadata().map(|m| m.len()).unwrap_or(0);
        Ok(RequestLog {
            path,
            max_bytes: max_bytes.max(1),
            keep,
            file: Mutex::new((f, len)),
        })
    }

    fn rotated(&self, n: usize) -> PathBuf {
        let mut p = self.path.clone().into_os_string();
        p.push(format!(".{n}"));
        p.into()
    }

    pub fn record(&self, entry: &Value) {
        let line = format!("{entry}\n");
        let mut guard = self.file.lock().expect("request log lock poisoned");
        if guard.1 > 0 && guard.1 + line.len() as u64 > self.max_bytes {
            for n in (1..self.keep).rev() {
                let _ = fs::rename(self.rotated(n), self.rotated(n + 1));
            }
            if self.keep == 0 {
                let _ = fs::remove_file(&self.path);
            } else {
                let _ = fs::rename(&self.path, self.rotated(1));
            }
            match OpenOptions::new().create(true).append(true).open(&self.path) {
                Ok(f) => *guard = (f, 0),
                Err(e) => tracing::warn!(error = %e, "cannot reopen request log"),
            }
        }
        if guard.0.write_all(line.as_bytes()).is_ok() {
            guard.1 += line.len() as u64;
        }
    }
}

struct AppState {
    toolbox: Arc<Toolbox>,
    token: Option<String>,
    log: Option<RequestLog>,
}

impl AppState {
    fn authorized(&self, headers: &HeaderMap) -> bool {
        let Some(token) = &self.token else { return true };
        headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token)
    }

    fn log(&self, entry: Value) {
        if let Some(log) = &self.log {
            log.record(&entry);
        }
    }
}

fn error_body(status: StatusCode, msg: String) -> Response {
    (status, Json(json!({ "error": msg }))).into_response()
}

async fn call_tool(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Response {
    let started = Instant::now();
    if !state.authorized(&headers) {
        state.log(json!({"route": "/tools/call", "status": 401}));
        return error_body(StatusCode::UNAUTHORIZED, "missing or wrong bearer token".into());
    }
    let req: ToolRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            state.log(json!({"route": "/tools/call", "status": 400, "error": e.to_string()}));
            return error_body(StatusCode::BAD_REQUEST, format!("malformed tool request: {e}"));
        }
    };
    let obs = state.toolbox.dispatch(&req.to_call(), None);
    state.log(json!({
        "route": "/tools/call",
        "status": 200,
        "request_id": req.request_id,
        "tool": req.tool,
        "ok": obs.ok,
        "micros": started.elapsed().as_micros() as u64,
    }));
    Json(ToolResponse::from_observation(req.request_id, obs)).into_response()
}

async fn specs(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    if !state.authorized(&headers) {
        return error_body(StatusCode::UNAUTHORIZED, "missing or wrong bearer token".into());
    }
    Json(state.toolbox.registry().schema_document()).into_response()
}

async fn healthz(State(state): State<Arc<AppState>>) -> Response {
    Json(json!({
        "status": "ready",
        "tools": state.toolbox.registry().names(),
        "index_hashes": state.toolbox.index_hashes,
    }))
    .into_response()
}

pub fn router(toolbox: Arc<Toolbox>, token: Option<String>, log: Option<RequestLog>) -> Router {
    let state = Arc::new(AppState { toolbox, token, log });
    Router::new()
        .route("/tools/call", post(call_tool))
        .route("/tools/specs", get(specs))
        .route("/healthz", get(healthz))
        .with_state(state)
}

/// A server running on its own runtime; dropping it stops the server.
pub struct GatewayHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl GatewayHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    /// Blocks until the server exits.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for GatewayHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds `config.bind` and serves the toolbox in the background.
pub fn serve(toolbox: Arc<Toolbox>, config: &GatewayConfig) -> Result<GatewayHandle> {
    let listener = std::net::TcpListener::bind(&config.bind)
        .map_err(|e| Error::Transport(format!("cannot bind {}: {e}", config.bind)))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| Error::Transport(format!("cannot configure {}: {e}", config.bind)))?;
    let addr = listener.local_addr().map_err(|e| Error::Transport(e.to_string()))?;
    let token = config
        .token_env
        .as_deref()
        .and_then(|k| std::env::var(k).ok())
        .filter(|t| !t.is_empty());
    let log = match &config.log_path {
        Some(p) => Some(RequestLog::open(p.clone(), config.log_max_bytes, config.log_keep)?),
        None => None,
    };
    let app = router(toolbox, token, log);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(config.worker_threads.max(1))
        .enable_all()
        .build()
        .map_err(|e| Error::Transport(format!("cannot start runtime: {e}")))?;
    let (tx, rx) = oneshot::channel::<()>();
    let (ready_tx, ready_rx) = std::sync::mpsc::channel::<Result<()>>();
    let thread = std::thread::Builder::new()
        .name("toolrec-gateway".into())
        .spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(e) => {
                        let _ = ready_tx.send(Err(Error::Transport(format!("cannot listen on {addr}: {e}"))));
                        return;
                    }
                };
                let _ = ready_tx.send(Ok(()));
                let server = axum::serve(listener, app).with_graceful_shutdown(async {
                    let _ = rx.await;
                });
                if let Err(e) = server.await {
                    tracing::error!(error = %e, "gateway stopped");
                }
            });
        })
        .map_err(|e| Error::Transport(format!("cannot spawn gateway thread: {e}")))?;
    ready_rx
        .recv()
        .map_err(|_| Error::Transport("gateway thread exited during startup".into()))??;
    tracing::info!(%addr, "gateway listening");
    Ok(GatewayHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// Blocking client for a running gateway.
#[derive(Debug, Clone)]
pub struct ToolClient {
    base_url: String,
    token: Option<String>,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl ToolClient {
    pub fn new(base_url: impl Into<String>, token: Option<String>, retry: RetryPolicy) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(ToolClient {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            token,
            retry,
            client,
        })
    }

    fn send(&self, path: &str, body: Option<&Value>) -> Result<Value> {
        let url = format!("{}{path}", self.base_url);
        let outcome = retry::with_backoff(&self.retry, |_| {
            let mut req = match body {
                Some(b) => self.client.post(&url).json(b),
                None => self.client.get(&url),
            };
            if let Some(t) = &self.token {
                req = req.bearer_auth(t);
            }
            let resp = req.send().map_err(|e| Attempt::Retry(format!("{url}: {e}")))?;
            let status = resp.status();
            let text = resp.text().map_err(|e| Attempt::Retry(format!("{url}: {e}")))?;
            if status.is_server_error() || status.as_u16() == 429 {
                return Err(Attempt::Retry(format!("{url}: HTTP {status}")));
            }
            if !status.is_success() {
                return Err(Attempt::Fatal(format!("{url}: HTTP {status}: {text}")));
            }
            serde_json::from_str(&text).map_err(|e| Attempt::Fatal(format!("{url}: bad response body: {e}")))
        });
        outcome.map_err(|(e, attempts)| Error::Transport(format!("{e} (after {attempts} attempts)")))
    }

    pub fn call(&self, req: &ToolRequest) -> Result<ToolResponse> {
        let body = serde_json::to_value(req)?;
        let resp: ToolResponse = serde_json::from_value(self.send("/tools/call", Some(&body))?)?;
        if resp.request_id != req.request_id {
            return Err(Error::Transport(format!(
                "{}/tools/call: response for '{}' answered request '{}'",
                self.base_url, resp.request_id, req.request_id
            )));
        }
        Ok(resp)
    }

    /// Posts an arbitrary body; for exercising the server's input checks.
    pub fn call_raw(&self, body: &Value) -> Result<Value> {
        self.send("/tools/call", Some(body))
    }

    pub fn specs(&self) -> Result<Value> {
        self.send("/tools/specs", None)
    }

    pub fn health(&self) -> Result<Value> {
        self.send("/healthz", None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DatasetFormat;
    use crate::pipeline::World;
    use crate::synthetic::SyntheticConfig;

    fn server(token_env: Option<&str>) -> (Arc<Toolbox>, GatewayHandle) {
        let world = World::synthetic(&SyntheticConfig::new(DatasetFormat::Amazon, 10, 40, 120, 2)).unwrap();
        let tb = Arc::new(world.toolbox);
        let cfg = GatewayConfig {
            bind: "127.0.0.1:0".into(),
            token_env: token_env.map(str::to_owned),
            ..GatewayConfig::default()
        };
        let h = serve(tb.clone(), &cfg).unwrap();
        (tb, h)
    }

    fn quick() -> RetryPolicy {
        RetryPolicy {
            max_retries: 1,
            base_delay_ms: 1,
            max_delay_ms: 1,
        }
    }

    #[test]
    fn tool_errors_are_data_and_bad_bodies_are_400() {
        let (tb, h) = server(None);
        let client = ToolClient::new(h.base_url(), None, quick()).unwrap();
        let user = tb.indexes().histories.keys().next().unwrap().clone();
        let ok = client
            .call(&ToolRequest::new("a", &ToolCall::new("user_profile_search", json!({"user_id": user.as_str()}))))
            .unwrap();
        assert!(ok.ok);
        assert_eq!(ok.request_id, "a");
        let unknown = client.call(&ToolRequest::new("b", &ToolCall::new("nope", json!({})))).unwrap();
        assert!(!unknown.ok);
        assert!(unknown.error.unwrap().starts_with("unknown tool 'nope'"));
        let err = client.call_raw(&json!({"tool": 3})).unwrap_err().to_string();
        assert!(err.contains("400"), "{err}");
        assert_eq!(client.health().unwrap()["status"], "ready");
        assert_eq!(client.specs().unwrap()["tools"].as_array().unwrap().len(), 5);
    }

    #[test]
    fn bearer_token_is_enforced() {
        std::env::set_var("TOOLREC_TEST_GATEWAY_TOKEN", "s3cret");
        let (_, h) = server(Some("TOOLREC_TEST_GATEWAY_TOKEN"));
        let req = ToolRequest::new("x", &ToolCall::new("nope", json!({})));
        let anon = ToolClient::new(h.base_url(), None, quick()).unwrap();
        assert!(anon.call(&req).unwrap_err().to_string().contains("401"));
        let wrong = ToolClient::new(h.base_url(), Some("guess".into()), quick()).unwrap();
        assert!(wrong.call(&req).is_err());
        let authed = ToolClient::new(h.base_url(), Some("s3cret".into()), quick()).unwrap();
        assert_eq!(authed.call(&req).unwrap().request_id, "x");
        assert_eq!(anon.health().unwrap()["status"], "ready");
    }

    #[test]
    fn server_down_names_the_endpoint() {
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let client = ToolClient::new(format!("http://127.0.0.1:{port}"), None, quick()).unwrap();
        let err = client.call(&ToolRequest::new("z", &ToolCall::new("nope", json!({})))).unwrap_err().to_string();
        assert!(err.contains(&format!("127.0.0.1:{port}/tools/call")), "{err}");
        assert!(err.contains("2 attempts"), "{err}");
    }

    #[test]
    fn occupied_port_fails_to_bind() {
        let (tb, h) = server(None);
        let cfg = GatewayConfig {
            bind: h.addr().to_string(),
            ..GatewayConfig::default()
        };
        let err = serve(tb, &cfg).err().unwrap().to_string();
        assert!(err.contains("cannot bind"), "{err}");
    }

    #[test]
    fn request_log_rotates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gw.log");
        let log = RequestLog::open(path.clone(), 64, 2).unwrap();
        for i in 0..20 {
            log.record(&json!({"i": i, "pad": "xxxxxxxxxxxxxxxxxxxx"}));
        }
        assert!(path.exists());
        assert!(dir.path().join("gw.log.1").exists());
        assert!(dir.path().join("gw.log.2").exists());
        assert!(!dir.path().join("gw.log.3").exists());
        assert!(fs::metadata(&path).unwrap().len() <= 64);
    }
}
