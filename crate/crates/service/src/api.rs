use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::workspace::{ComputeRequest, PlacementRequest, ServiceError, Workspace};

const OPENAPI: &str = include_str!("openapi.json");
const INDEX: &str = include_str!("index.html");

/// Loaded workspace plus a response cache keyed by workspace hash and
/// canonical request.
pub struct AppState {
    root: PathBuf,
    workspace: RwLock<Arc<Workspace>>,
    cache: Mutex<HashMap<String, Arc<String>>>,
}

impl AppState {
    pub fn new(workspace: Workspace) -> Arc<Self> {
        Arc::new(AppState {
            root: workspace.root.clone(),
            workspace: RwLock::new(Arc::new(workspace)),
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn workspace(&self) -> Arc<Workspace> {
        Arc::clone(&self.workspace.read().expect("workspace lock"))
    }

    pub fn cached_responses(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/", get(|| async { Html(INDEX) }))
        .route("/api/spec", get(spec))
        .route("/api/scenarios", get(scenarios))
        .route("/api/layers/{layer}", get(layer))
        .route("/api/accessibility", post(accessibility))
        .route("/api/placement", post(placement))
        .route("/api/reload", post(reload))
        .with_state(state)
}

struct ApiError(StatusCode, Value);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let message = e.to_string();
        match e {
            ServiceError::NotFound(_) => ApiError(StatusCode::NOT_FOUND, json!({ "error": message })),
            ServiceError::UnknownShelters(ids) => {
                ApiError(StatusCode::UNPROCESSABLE_ENTITY, json!({ "error": message, "unknown": ids }))
            }
            ServiceError::Invalid(_) => ApiError(StatusCode::UNPROCESSABLE_ENTITY, json!({ "error": message })),
            ServiceError::Infeasible { zone, shortfall } => {
                ApiError(StatusCode::CONFLICT, json!({ "error": message, "zone": zone, "shortfall": shortfall }))
            }
            ServiceError::Scenario(_) => ApiError(StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": message })),
        }
    }
}

async fn spec() -> Response {
    ([(header::CONTENT_TYPE, "application/json")], OPENAPI).into_response()
}

async fn scenarios(State(state): State<Arc<AppState>>) -> Json<Value> {
    let ws = state.workspace();
    let list: Vec<Value> = ws
        .scenarios
        .values()
        .map(|s| {
            json!({
                "id": s.id(),
                "case": s.case(),
                "gini": s.base.gini,
                "supply": s.base.supply.iter().map(|x| &x.id).collect::<Vec<_>>(),
            })
        })
        .collect();
    Json(json!({ "workspace": ws.hash, "scenarios": list }))
}

#[derive(Debug, Deserialize)]
struct LayerQuery {
    scenario: Option<String>,
}

async fn layer(
    State(state): State<Arc<AppState>>,
    Path(name): Path<String>,
    Query(q): Query<LayerQuery>,
) -> Result<Json<Value>, ApiError> {
    Ok(Json(state.workspace().layer(&name, q.scenario.as_deref())?))
}

fn cache_key(workspace: &str, endpoint: &str, canonical: &impl Serialize) -> String {
    let body = serde_json::to_string(canonical).expect("request serializes");
    Sha256::digest(format!("{workspace}\n{endpoint}\n{body}")).iter().map(|b| format!("{b:02x}")).collect()
}

fn json_response(body: Arc<String>, hit: bool, started: Instant) -> Response {
    let mut res = ([(header::CONTENT_TYPE, "application/json")], body.as_str().to_owned()).into_response();
    let headers = res.headers_mut();
    headers.insert("x-cache", HeaderValue::from_static(if hit { "hit" } else { "miss" }));
    let ms = started.elapsed().as_secs_f64() * 1000.0;
    headers.insert("x-compute-ms", HeaderValue::from_str(&format!("{ms:.3}")).expect("ascii"));
    res
}

/// Serves from the cache or computes `work` off the async runtime.
async fn cached<R, F>(state: Arc<AppState>, endpoint: &'static str, canonical: R, work: F) -> Result<Response, ApiError>
where
    R: Serialize + Send + 'static,
    F: FnOnce(&Workspace, &R) -> Result<Value, ServiceError> + Send + 'static,
{
    let started = Instant::now();
    let ws = state.workspace();
    let key = cache_key(&ws.hash, endpoint, &canonical);
    if let Some(body) = state.cache.lock().expect("cache lock").get(&key).cloned() {
        return Ok(json_response(body, true, started));
    }
    let value = tokio::task::spawn_blocking(move || work(&ws, &canonical))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": e.to_string() })))??;
    let body = Arc::new(serde_json::to_string(&value).expect("response serializes"));
    state.cache.lock().expect("cache lock").insert(key, Arc::clone(&body));
    Ok(json_response(body, false, started))
}

async fn accessibility(
    State(state): State<Arc<AppState>>,
    Json(req): Json<ComputeRequest>,
) -> Result<Response, ApiError> {
    let canonical = state.workspace().canonical(&req)?;
    cached(state, "accessibility", canonical, |ws, req| {
        Ok(serde_json::to_value(ws.compute(req)?).expect("response serializes"))
    })
    .await
}

async fn placement(
    State(state): State<Arc<AppState>>,
    Json(req): Json<PlacementRequest>,
) -> Result<Response, ApiError> {
    let canonical = state.workspace().canonical_placement(&req)?;
    cached(state, "placement", canonical, |ws, req| {
        Ok(serde_json::to_value(ws.place(req)?).expect("response serializes"))
    })
    .await
}

async fn reload(State(state): State<Arc<AppState>>) -> Result<Json<Value>, ApiError> {
    let root = state.root.clone();
    let fresh = tokio::task::spawn_blocking(move || Workspace::load(&root))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": e.to_string() })))?
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": e.to_string() })))?;
    let hash = fresh.hash.clone();
    *state.workspace.write().expect("workspace lock") = Arc::new(fresh);
    state.cache.lock().expect("cache lock").clear();
    Ok(Json(json!({ "workspace": hash })))
}
