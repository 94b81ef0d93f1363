//! HTTP annotation service. One session drives one loop run: the loop
//! thread blocks inside [`InteractiveOracle::label`] until every document
//! of the pending batch has a label, and handlers serialize all mutations
//! behind the session mutex.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::oneshot;
use tower_http::services::ServeDir;

use needle_core::activeloop::{self, LoopConfig, LoopMode, LoopState, Oracle, OracleError, Query};
use needle_core::{LearningTrace, ModelKind, TraceRecord};

use crate::commands::SupervisedSetup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    /// The loop is training or evaluating; no batch is open.
    Waiting,
    /// A batch is open for labels.
    Collecting,
    Complete,
    Failed,
}

#[derive(Debug)]
struct Inner {
    state: SessionState,
    batch: u64,
    pending: Vec<Query>,
    /// Labels for the open batch.
    received: HashMap<String, bool>,
    /// Every label accepted in this session.
    labeled: HashMap<String, bool>,
    records: Vec<TraceRecord>,
    trace: Option<LearningTrace>,
    error: Option<String>,
    closed: bool,
}

#[derive(Debug)]
pub struct Session {
    id: String,
    test_fold: usize,
    mode: LoopMode,
    model: ModelKind,
    iterations: usize,
    timeout: Duration,
    inner: Mutex<Inner>,
    ready: Condvar,
}

/// Outcome of a label submission.
#[derive(Debug, Clone, PartialEq)]
pub enum Submit {
    /// The open batch is now complete.
    Complete,
    /// Accepted; this many pending documents still lack a label.
    Partial(usize),
    /// Every id was already labeled identically; nothing changed.
    Duplicate,
    Conflict { reason: String, ids: Vec<String> },
}

impl Session {
    pub fn new(id: impl Into<String>, test_fold: usize, cfg: &LoopConfig, timeout: Duration) -> Arc<Self> {
        Arc::new(Self {
            id: id.into(),
            test_fold,
            mode: cfg.mode,
            model: cfg.model,
            iterations: cfg.iterations,
            timeout,
            inner: Mutex::new(Inner {
                state: SessionState::Waiting,
                batch: 0,
                pending: Vec::new(),
                received: HashMap::new(),
                labeled: HashMap::new(),
                records: Vec::new(),
                trace: None,
                error: None,
                closed: false,
            }),
            ready: Condvar::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn state(&self) -> SessionState {
        self.lock().state
    }

    /// Makes a blocked oracle call fail with [`OracleError::Closed`].
    pub fn close(&self) {
        self.lock().closed = true;
        self.ready.notify_all();
    }

    pub fn status(&self) -> serde_json::Value {
        let g = self.lock();
        json!({
            "session": self.id,
            "state": g.state,
            "batch": g.batch,
            "pending": g.pending.len(),
            "received": g.received.len(),
            "labeled": g.labeled.len(),
            "iterations_done": g.records.len().saturating_sub(1),
            "iterations": self.iterations,
            "test_fold": self.test_fold,
            "mode": self.mode.name(),
            "model": self.model,
            "error": g.error,
        })
    }

    /// Pending documents in loop order (most uncertain first in active mode).
    pub fn batch(&self) -> Vec<Query> {
        self.lock().pending.clone()
    }

    /// The final trace once complete, otherwise the records so far with
    /// `reg_c` null.
    pub fn trace(&self) -> serde_json::Value {
        let g = self.lock();
        match &g.trace {
            Some(t) => serde_json::to_value(t).expect("trace serializes"),
            None => json!({
                "test_fold": self.test_fold,
                "mode": self.mode,
                "model": self.model,
                "reg_c": null,
                "records": g.records,
            }),
        }
    }

    /// Validates the whole submission before applying any of it.
    pub fn submit(&self, labels: &HashMap<String, bool>) -> Submit {
        let mut g = self.lock();
        let collecting = g.state == SessionState::Collecting;
        let mut unknown = Vec::new();
        let mut conflicting = Vec::new();
        let mut fresh = 0;
        for (id, &l) in labels {
            match g.labeled.get(id) {
                Some(&prev) if prev != l => conflicting.push(id.clone()),
                Some(_) => {}
                None if collecting && g.pending.iter().any(|q| &q.id == id) => fresh += 1,
                None => unknown.push(id.clone()),
            }
        }
        if !conflicting.is_empty() {
            conflicting.sort();
            return Submit::Conflict {
                reason: "label differs from the one already recorded".into(),
                ids: conflicting,
            };
        }
        if !unknown.is_empty() {
            unknown.sort();
            return Submit::Conflict {
                reason: "id is not in the pending batch".into(),
                ids: unknown,
            };
        }
        if fresh == 0 {
            return Submit::Duplicate;
        }
        for (id, &l) in labels {
            if !g.labeled.contains_key(id) {
                g.labeled.insert(id.clone(), l);
                g.received.insert(id.clone(), l);
            }
        }
        let remaining = g.pending.len() - g.received.len();
        if remaining == 0 {
            g.state = SessionState::Waiting;
            drop(g);
            self.ready.notify_all();
            Submit::Complete
        } else {
            Submit::Partial(remaining)
        }
    }

    fn push_record(&self, r: &TraceRecord) {
        self.lock().records.push(r.clone());
    }

    fn finish(&self, result: &Result<LearningTrace, activeloop::LoopError>) {
        let mut g = self.lock();
        g.pending.clear();
        match result {
            Ok(t) => {
                g.state = SessionState::Complete;
                g.trace = Some(t.clone());
            }
            Err(e) => {
                g.state = SessionState::Failed;
                g.error = Some(e.to_string());
            }
        }
    }
}

/// Oracle whose answers arrive through [`Session::submit`].
pub struct InteractiveOracle {
    session: Arc<Session>,
}

impl InteractiveOracle {
    pub fn new(session: Arc<Session>) -> Self {
        Self { session }
    }
}

impl Oracle for InteractiveOracle {
    fn label(&mut self, queries: &[Query]) -> Result<Vec<bool>, OracleError> {
        let s = &self.session;
        let mut g = s.lock();
        if queries.is_empty() {
            return Ok(Vec::new());
        }
        g.pending = queries.to_vec();
        g.received.clear();
        g.batch += 1;
        g.state = SessionState::Collecting;
        let deadline = Instant::now() + s.timeout;
        loop {
            if g.closed {
                return Err(OracleError::Closed);
            }
            if g.state == SessionState::Waiting && g.received.len() == g.pending.len() {
                break;
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(OracleError::Timeout);
            }
            g = s.ready.wait_timeout(g, left).unwrap_or_else(|p| p.into_inner()).0;
        }
        let labels = g.pending.iter().map(|q| g.received[&q.id]).collect();
        g.pending.clear();
        g.received.clear();
        Ok(labels)
    }
}

/// Runs the loop for `test_fold` on a background thread, feeding the
/// session's records and final state.
pub fn spawn_loop(
    session: Arc<Session>,
    setup: Arc<SupervisedSetup>,
    test_fold: usize,
    cfg: LoopConfig,
) -> JoinHandle<Result<LearningTrace, activeloop::LoopError>> {
    std::thread::spawn(move || {
        let mut oracle = InteractiveOracle::new(session.clone());
        let observer_session = session.clone();
        let mut observer = move |st: &LoopState<'_>| observer_session.push_record(st.record);
        let result = activeloop::run_loop(
            &setup.corpus,
            &setup.features,
            &setup.plan,
            test_fold,
            &cfg,
            &mut oracle,
            Some(&mut observer),
        );
        session.finish(&result);
        result
    })
}

#[derive(Debug, Deserialize)]
pub struct LabelBody {
    pub labels: HashMap<String, u8>,
    /// When present, must match the session id.
    #[serde(default)]
    pub session: Option<String>,
}

fn conflict(reason: &str, ids: Vec<String>, batch: u64) -> Response {
    (StatusCode::CONFLICT, Json(json!({ "error": reason, "ids": ids, "batch": batch }))).into_response()
}

async fn get_status(State(s): State<Arc<Session>>) -> Json<serde_json::Value> {
    Json(s.status())
}

async fn get_batch(State(s): State<Arc<Session>>) -> Json<Vec<Query>> {
    Json(s.batch())
}

async fn get_trace(State(s): State<Arc<Session>>) -> Json<serde_json::Value> {
    Json(s.trace())
}

async fn post_labels(State(s): State<Arc<Session>>, Json(body): Json<LabelBody>) -> Response {
    let batch = s.lock().batch;
    if let Some(id) = &body.session {
        if id != s.id() {
            return conflict("stale session", Vec::new(), batch);
        }
    }
    let mut labels = HashMap::with_capacity(body.labels.len());
    for (id, v) in body.labels {
        match v {
            0 => labels.insert(id, false),
            1 => labels.insert(id, true),
            _ => {
                let msg = json!({ "error": format!("label for `{id}` must be 0 or 1") });
                return (StatusCode::BAD_REQUEST, Json(msg)).into_response();
            }
        };
    }
    match s.submit(&labels) {
        Submit::Complete | Submit::Duplicate => StatusCode::NO_CONTENT.into_response(),
        Submit::Partial(remaining) => (StatusCode::ACCEPTED, Json(json!({ "remaining": remaining }))).into_response(),
        Submit::Conflict { reason, ids } => conflict(&reason, ids, batch),
    }
}

pub fn router(session: Arc<Session>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/status", get(get_status))
        .route("/batch", get(get_batch))
        .route("/labels", post(post_labels))
        .route("/trace", get(get_trace))
        .with_state(session);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// An HTTP server on its own runtime thread.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn start(bind: &str, app: Router) -> Result<Self> {
        let std_listener = std::net::TcpListener::bind(bind).with_context(|| format!("binding {bind}"))?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener registers");
                let shutdown = async {
                    let _ = rx.await;
                };
                if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
                    log::error!("server stopped: {e}");
                }
            })
        });
        Ok(Self {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}
