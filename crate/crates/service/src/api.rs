//! HTTP endpoints: search, clip lookup, interaction logging, health.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, OnceLock};

use avarchive_core::corpus::{Caption, Split, Transcript};
use avarchive_core::datafication::{
    Action, DescriptorFacets, InteractionLog, InteractionRecord, ProvenanceRef, StoreError,
};
use avarchive_core::engine::{EngineError, Route};
use avarchive_core::vector::ScoredHit;
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::artifacts::Loaded;

/// Participant recorded for searches that do not name one.
pub const ANONYMOUS: &str = "anonymous";

/// Shared by every handler. The engine bundle is set once loading finishes;
/// until then search and clip lookups answer 503.
pub struct AppState {
    loaded: OnceLock<Loaded>,
    log: InteractionLog,
}

impl AppState {
    pub fn new(log: InteractionLog) -> Self {
        Self {
            loaded: OnceLock::new(),
            log,
        }
    }

    pub fn with_loaded(loaded: Loaded, log: InteractionLog) -> Self {
        let state = Self::new(log);
        state.set_loaded(loaded);
        state
    }

    /// Installs the engine bundle; later calls are ignored.
    pub fn set_loaded(&self, loaded: Loaded) {
        let _ = self.loaded.set(loaded);
    }

    pub fn loaded(&self) -> Option<&Loaded> {
        self.loaded.get()
    }

    pub fn log(&self) -> &InteractionLog {
        &self.log
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_ready() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "indexes are still loading")
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub route: Route,
    pub fallback_used: bool,
    pub confidence: f64,
    pub results: Vec<ScoredHit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorSummary {
    pub descriptor_id: String,
    pub kind: String,
    pub payload_ref: String,
    pub facets: DescriptorFacets,
    pub provenance: ProvenanceRef,
    /// Provenance of the descriptor and each ancestor, nearest first.
    pub lineage: Vec<ProvenanceRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipResponse {
    pub clip_id: String,
    pub split: Split,
    pub captions: Vec<Caption>,
    pub transcript: Option<Transcript>,
    pub descriptors: Vec<DescriptorSummary>,
}

/// Body of `POST /interactions`; the server adds the id and timestamp.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionBody {
    #[serde(default)]
    pub participant_id: Option<String>,
    pub action: Action,
    #[serde(default)]
    pub query_text: Option<String>,
    #[serde(default)]
    pub route: Option<Route>,
    #[serde(default)]
    pub target_clip_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionCreated {
    pub interaction_id: String,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/search", get(search))
        .route("/clips/{id}", get(clip))
        .route("/interactions", post(interaction))
        .route("/healthz", get(healthz))
        .with_state(state)
}

fn new_record(participant: Option<String>, action: Action) -> InteractionRecord {
    InteractionRecord {
        interaction_id: uuid::Uuid::new_v4().to_string(),
        participant_id: participant.unwrap_or_else(|| ANONYMOUS.to_owned()),
        timestamp: Utc::now(),
        action,
        query_text: None,
        route: None,
        target_clip_id: None,
    }
}

async fn search(
    State(state): State<Arc<AppState>>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<SearchResponse>, ApiError> {
    let q = params.get("q").map(String::as_str).unwrap_or_default();
    if q.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "q must not be empty"));
    }
    let k = match params.get("k") {
        None => None,
        Some(raw) => match raw.parse::<usize>() {
            Ok(k) if k >= 1 => Some(k),
            _ => return Err(ApiError::new(StatusCode::BAD_REQUEST, "k must be an integer >= 1")),
        },
    };
    let loaded = state.loaded().ok_or_else(ApiError::not_ready)?;
    let k = k.unwrap_or(loaded.engine.config().k_default);
    let (decision, results) = loaded.engine.search(q, k).map_err(|e| match e {
        EngineError::NoQueryEmbedding(_) => {
            ApiError::new(StatusCode::BAD_REQUEST, "query has no searchable terms")
        }
        other => ApiError::internal(other),
    })?;

    let mut record = new_record(params.get("participant").cloned(), Action::Query);
    record.query_text = Some(q.to_owned());
    record.route = Some(decision.route);
    state.log().append_interaction(record).map_err(ApiError::internal)?;

    Ok(Json(SearchResponse {
        route: decision.route,
        fallback_used: decision.fallback_used,
        confidence: decision.label_confidence,
        results,
    }))
}

async fn clip(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<ClipResponse>, ApiError> {
    let loaded = state.loaded().ok_or_else(ApiError::not_ready)?;
    let record = loaded
        .corpus
        .get(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown clip {id}")))?;
    let descriptors = loaded
        .descriptors
        .for_clip(&id)
        .map(|d| {
            Ok(DescriptorSummary {
                descriptor_id: d.descriptor_id.clone(),
                kind: d.kind.clone(),
                payload_ref: d.payload_ref.clone(),
                facets: d.facets.clone(),
                provenance: d.provenance.clone(),
                lineage: loaded
                    .descriptors
                    .lineage_of(&d.descriptor_id)
                    .map_err(ApiError::internal)?,
            })
        })
        .collect::<Result<_, ApiError>>()?;
    Ok(Json(ClipResponse {
        clip_id: record.clip_id.clone(),
        split: record.split,
        captions: record.captions.clone(),
        transcript: record.transcript.clone(),
        descriptors,
    }))
}

async fn interaction(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<InteractionCreated>, ApiError> {
    let body: InteractionBody = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let mut record = new_record(body.participant_id, body.action);
    record.query_text = body.query_text;
    record.route = body.route;
    record.target_clip_id = body.target_clip_id;
    let interaction_id = record.interaction_id.clone();
    state.log().append_interaction(record).map_err(|e| match e {
        StoreError::Invalid(m) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m),
        other => ApiError::internal(other),
    })?;
    Ok(Json(InteractionCreated { interaction_id }))
}

async fn healthz(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "status": "ok",
        "ready": state.loaded().is_some(),
        "interactions": state.log().len(),
    }))
}

/// A server running on a background task.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    shutdown: tokio::sync::oneshot::Sender<()>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl RunningServer {
    /// Serves `state` on an already bound listener.
    pub fn spawn(listener: TcpListener, state: Arc<AppState>) -> std::io::Result<Self> {
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let app = router(state.clone());
        let task = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        });
        Ok(Self {
            addr,
            state,
            shutdown: tx,
            task,
        })
    }

    /// Stops accepting requests, waits for in-flight ones, flushes the log.
    pub async fn stop(self) -> anyhow::Result<()> {
        let _ = self.shutdown.send(());
        self.task.await??;
        self.state.log().flush()?;
        Ok(())
    }
}
