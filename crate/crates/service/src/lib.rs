//! Local HTTP control plane for live simulation sessions.
//!
//! Sessions wrap the same [`Simulation`] the command line drives, so a session
//! advanced to its horizon without steering yields the CLI's artifacts byte for
//! byte. Steering (stress injection) is recorded in the session's audit chain
//! before the first step it affects. Forking deep-copies the run state,
//! including every random substream position.
//!
//! Endpoints:
//!
//! | method | path | body / query |
//! |---|---|---|
//! | POST | `/sessions` | `{scenario_path?, scenario_yaml?, seed?, overrides?}` |
//! | POST | `/sessions/{id}/advance` | `{n_steps}` |
//! | POST | `/sessions/{id}/inject` | `{path, value, duration?}` |
//! | POST | `/sessions/{id}/fork` | — |
//! | GET | `/sessions/{id}` | — |
//! | GET | `/sessions/{id}/metrics` | `since_t`, `format=json\|csv` |
//! | GET | `/sessions/{id}/events` | `since_seq`, `format=json\|jsonl` |
//! | GET | `/sessions/{id}/summary` | — |

mod session;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use govsim_core::config::resolve_scenario;
use govsim_core::{load_scenario, ScenarioConfig, Simulation};
use serde::Deserialize;
use serde_json::{json, Value};

pub use session::Session;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("no session `{0}`")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Sim(#[from] govsim_core::Error),
    #[error("worker failed: {0}")]
    Internal(String),
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        use govsim_core::Error as E;
        let (status, kind) = match &self {
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ServiceError::Sim(e) if e.is_config() => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_config"),
            ServiceError::Sim(E::Io(_)) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_config"),
            ServiceError::Sim(_) | ServiceError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "runtime"),
        };
        let mut body = json!({ "error": self.to_string(), "kind": kind });
        if let ServiceError::Sim(E::UnknownKey { key, valid }) = &self {
            body["key"] = json!(key);
            body["valid_keys"] = json!(valid);
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ServiceError>;
type Shared = Arc<Mutex<Session>>;

/// All live sessions. Cloning shares the registry.
#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<u64, Shared>>>,
    next_id: Arc<AtomicU64>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&self, s: Session) -> u64 {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst) + 1;
        self.sessions.lock().expect("registry lock").insert(id, Arc::new(Mutex::new(s)));
        id
    }

    fn get(&self, id: &str) -> ApiResult<Shared> {
        id.parse::<u64>()
            .ok()
            .and_then(|n| self.sessions.lock().expect("registry lock").get(&n).cloned())
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }
}

/// Runs `f` on a blocking thread with the session locked.
async fn with_session<T, F>(s: Shared, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut Session) -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || {
        let mut guard = s.lock().map_err(|_| ServiceError::Internal("session lock poisoned".into()))?;
        f(&mut guard)
    })
    .await
    .map_err(|e| ServiceError::Internal(e.to_string()))?
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_info))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/inject", post(inject))
        .route("/sessions/{id}/fork", post(fork))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/summary", get(summary))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(AppState::new())).await
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateRequest {
    pub scenario_path: Option<String>,
    pub scenario_yaml: Option<String>,
    pub seed: Option<u64>,
    pub overrides: BTreeMap<String, Value>,
}

impl CreateRequest {
    /// Resolves the scenario exactly as the command line would.
    pub fn resolve(&self) -> ApiResult<ScenarioConfig> {
        let mut ov: Vec<(String, String)> = self
            .overrides
            .iter()
            .map(|(k, v)| {
                let raw = match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (k.clone(), raw)
            })
            .collect();
        if let Some(seed) = self.seed {
            ov.push(("seed".into(), seed.to_string()));
        }
        Ok(match (&self.scenario_path, &self.scenario_yaml) {
            (Some(_), Some(_)) => {
                return Err(ServiceError::BadRequest(
                    "give either scenario_path or scenario_yaml, not both".into(),
                ))
            }
            (Some(p), None) => load_scenario(Path::new(p), &ov)?,
            (None, Some(text)) => resolve_scenario(text, None, &ov)?,
            (None, None) => resolve_scenario("", None, &ov)?,
        })
    }
}

fn state_json(id: u64, s: &Session) -> Value {
    json!({
        "session_id": id.to_string(),
        "t": s.t(),
        "horizon_T": s.sim().scenario().horizon_t,
        "finished": s.is_finished(),
        "backlog": s.sim().backlog().len(),
        "policy": s.sim().policy(),
    })
}

async fn create_session(State(st): State<AppState>, Json(req): Json<CreateRequest>) -> ApiResult<impl IntoResponse> {
    let scenario = tokio::task::spawn_blocking(move || req.resolve())
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    let config = serde_json::to_value(&scenario).map_err(govsim_core::Error::from)?;
    let hash = scenario.config_hash();
    let session = Session::new(Simulation::new(scenario)?);
    let mut body = state_json(0, &session);
    let id = st.insert(session);
    body["session_id"] = json!(id.to_string());
    body["config"] = config;
    body["config_hash"] = json!(hash);
    Ok((StatusCode::CREATED, Json(body)))
}

async fn session_info(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let n: u64 = id.parse().unwrap_or_default();
    let s = st.get(&id)?;
    with_session(s, move |s| Ok(Json(state_json(n, s)))).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvanceRequest {
    pub n_steps: u32,
}

async fn advance(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<AdvanceRequest>,
) -> ApiResult<Json<Value>> {
    let n: u64 = id.parse().unwrap_or_default();
    let s = st.get(&id)?;
    with_session(s, move |s| {
        if req.n_steps > 0 && s.is_finished() {
            return Err(ServiceError::Conflict(format!("session {n} already reached its horizon")));
        }
        let from = s.t();
        let snaps = s.advance(req.n_steps)?;
        let mut body = state_json(n, s);
        body["snapshots"] = govsim_core::audit::normalize(&serde_json::to_value(snaps).map_err(govsim_core::Error::from)?);
        body["rows"] = s.rows_json(from);
        Ok(Json(body))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectRequest {
    pub path: String,
    pub value: Value,
    #[serde(default)]
    pub duration: Option<u32>,
}

async fn inject(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<InjectRequest>,
) -> ApiResult<Json<Value>> {
    let n: u64 = id.parse().unwrap_or_default();
    let s = st.get(&id)?;
    with_session(s, move |s| {
        if s.is_finished() {
            return Err(ServiceError::Conflict(format!("session {n} already reached its horizon")));
        }
        let evs = s.inject(&req.path, req.value, req.duration)?;
        let mut body = state_json(n, s);
        body["ack"] = json!(true);
        body["events"] = serde_json::to_value(evs).map_err(govsim_core::Error::from)?;
        Ok(Json(body))
    })
    .await
}

async fn fork(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    let parent = st.get(&id)?;
    let copy = with_session(parent, |s| Ok(s.clone())).await?;
    let mut body = state_json(0, &copy);
    let new_id = st.insert(copy);
    body["session_id"] = json!(new_id.to_string());
    body["parent"] = json!(id);
    Ok((StatusCode::CREATED, Json(body)))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsQuery {
    pub since_t: u32,
    pub format: Option<String>,
}

async fn metrics(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<MetricsQuery>,
) -> ApiResult<Response> {
    let s = st.get(&id)?;
    with_session(s, move |s| match q.format.as_deref() {
        None | Some("json") => Ok(Json(s.rows_json(q.since_t)).into_response()),
        Some("csv") => Ok(([(header::CONTENT_TYPE, "text/csv")], s.metrics_csv(q.since_t)).into_response()),
        Some(f) => Err(ServiceError::BadRequest(format!("unknown format `{f}`; use json or csv"))),
    })
    .await
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventsQuery {
    pub since_seq: u64,
    pub format: Option<String>,
}

async fn events(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<EventsQuery>,
) -> ApiResult<Response> {
    let s = st.get(&id)?;
    with_session(s, move |s| match q.format.as_deref() {
        None | Some("json") => {
            let v = serde_json::to_value(s.events_since(q.since_seq)).map_err(govsim_core::Error::from)?;
            Ok(Json(v).into_response())
        }
        Some("jsonl") => Ok((
            [(header::CONTENT_TYPE, "application/x-ndjson")],
            s.events_jsonl(q.since_seq),
        )
            .into_response()),
        Some(f) => Err(ServiceError::BadRequest(format!("unknown format `{f}`; use json or jsonl"))),
    })
    .await
}

async fn summary(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let s = st.get(&id)?;
    with_session(s, |s| {
        Ok(([(header::CONTENT_TYPE, "application/json")], s.summary().to_json()).into_response())
    })
    .await
}
