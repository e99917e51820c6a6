//! Campaign advisor service.
//!
//! Sessions are held in memory behind per-session read/write locks and
//! written through to one JSON document each in the data directory. Every
//! mutation checks the caller's expected version under the write lock, so
//! concurrent writers cannot lose updates: one wins, the rest get 409.

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use spkg_api::*;
use spkg_core::campaign::{Campaign, CampaignSpec};
use spkg_core::rna::{generate_probe_library, TargetMolecule};

pub mod error;
pub mod store;

pub use error::ApiError;
pub use store::{Store, StoreError};

/// Session documents carry dense p×p covariances.
const BODY_LIMIT: usize = 64 << 20;

#[derive(Clone, Debug)]
pub struct AppState {
    pub store: Arc<Store>,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        Self { store: Arc::new(store) }
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(health))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/suggest", post(suggest))
        .route("/sessions/{id}/observations", post(record_observation))
        .route("/sessions/{id}/posterior", get(posterior))
        .route("/sessions/{id}/history", get(history))
        .route("/sessions/{id}/replay", get(replay))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then lets in-flight requests finish.
/// Mutations persist before they respond, so nothing is left to flush.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::malformed(e.body_text()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn health() -> Json<Health> {
    Json(Health::ok())
}

fn build_spec(req: CreateSession) -> Result<CampaignSpec, ApiError> {
    let full = TargetMolecule::parse_fasta(&req.molecule.fasta)
        .map_err(|e| ApiError::invalid("molecule.fasta", e.to_string()))?;
    let molecule = match req.molecule.window {
        Some((start, end)) => full
            .window(start, end)
            .map_err(|e| ApiError::invalid("molecule.window", e.to_string()))?,
        None => full,
    };
    let library =
        generate_probe_library(&molecule, &req.library).map_err(|e| ApiError::invalid("library", e.to_string()))?;
    Ok(CampaignSpec {
        molecule,
        library,
        prior: req.prior,
        policy: req.policy,
        energy_table: req.energy_table,
    })
}

async fn create_session(
    State(state): State<AppState>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<SessionCreated> {
    let req = body(payload)?;
    let store = state.store.clone();
    let id = blocking(move || {
        let campaign = Campaign::new(build_spec(req)?)?;
        store.insert(campaign)
    })
    .await?;
    tracing::info!(%id, "created session");
    Ok(Json(SessionCreated { id, version: 0 }))
}

fn info(id: &str, c: &Campaign) -> SessionInfo {
    let spec = c.spec();
    SessionInfo {
        id: id.to_owned(),
        version: c.version(),
        molecule: spec.molecule.name.clone(),
        first_position: spec.molecule.first_position(),
        num_coefficients: spec.molecule.len(),
        library: c.library().to_vec(),
        policy: spec.policy.clone(),
        observations: c.history().len(),
        suggestion_counter: c.counter(),
        pending: c.pending().cloned(),
    }
}

async fn list_sessions(State(state): State<AppState>) -> ApiResult<Vec<SessionInfo>> {
    let mut out = Vec::new();
    for id in state.store.ids() {
        let handle = state.store.get(&id)?;
        let c = handle.read().await;
        out.push(info(&id, &c));
    }
    Ok(Json(out))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<SessionInfo> {
    let handle = state.store.get(&id)?;
    let c = handle.read().await;
    Ok(Json(info(&id, &c)))
}

async fn suggest(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<SuggestRequest>, JsonRejection>,
) -> ApiResult<SuggestResponse> {
    let req = body(payload)?;
    let handle = state.store.get(&id)?;
    let mut guard = handle.write().await;
    if let Some(v) = req.expected_version {
        if v != guard.version() {
            return Err(ApiError::conflict(v, guard.version()));
        }
    }
    let mut next = guard.clone();
    let store = state.store.clone();
    let key = id.clone();
    let (next, suggestion) = blocking(move || {
        let before = next.counter();
        let s = next.suggest(req.mode)?;
        if next.counter() != before {
            store.persist(&key, &next)?;
        }
        Ok((next, s))
    })
    .await?;
    *guard = next;
    Ok(Json(SuggestResponse {
        id,
        version: guard.version(),
        suggestion,
    }))
}

async fn record_observation(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<ObservationRequest>, JsonRejection>,
) -> ApiResult<ObservationResponse> {
    let req = body(payload)?;
    let handle = state.store.get(&id)?;
    let mut guard = handle.write().await;
    if req.expected_version != guard.version() {
        return Err(ApiError::conflict(req.expected_version, guard.version()));
    }
    let mut next = guard.clone();
    let store = state.store.clone();
    let key = id.clone();
    let (next, version, delta) = blocking(move || {
        let (version, delta) = next.record(req.probe, req.value, req.noise_sd, req.expected_version)?;
        store.persist(&key, &next)?;
        Ok((next, version, delta))
    })
    .await?;
    *guard = next;
    if delta.fell_back {
        tracing::warn!(%id, version, "lasso path fell back to a full solve");
    }
    Ok(Json(ObservationResponse { id, version, delta }))
}

async fn posterior(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<PosteriorResponse> {
    let handle = state.store.get(&id)?;
    let c = handle.read().await;
    Ok(Json(PosteriorResponse {
        version: c.version(),
        posterior: c.posterior(),
        id,
    }))
}

async fn history(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<HistoryResponse> {
    let handle = state.store.get(&id)?;
    let c = handle.read().await;
    Ok(Json(HistoryResponse {
        version: c.version(),
        history: c.history().to_vec(),
        id,
    }))
}

async fn replay(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<ReplayResponse> {
    let handle = state.store.get(&id)?;
    let c = handle.read().await.clone();
    blocking(move || {
        let replayed = Campaign::replay(c.spec().clone(), c.history())?;
        let live = serde_json::to_string(&c.belief().snapshot()).map_err(|e| ApiError::internal(e.to_string()))?;
        let belief = replayed.belief().snapshot();
        let again = serde_json::to_string(&belief).map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(Json(ReplayResponse {
            id,
            version: c.version(),
            matches: live == again && replayed.lasso() == c.lasso(),
            belief,
        }))
    })
    .await
}
