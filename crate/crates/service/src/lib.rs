//! HTTP service for interactive design sessions.
//!
//! Routes:
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/sessions` | create from `{room_type, items, bounds?, backend?}` |
//! | GET | `/sessions/{id}` | full session view |
//! | DELETE | `/sessions/{id}` | drop the session |
//! | POST | `/sessions/{id}/generate` | run the generation turn |
//! | POST | `/sessions/{id}/edit` | `{"kind": "add" \| "remove", "items": [...]}` |
//! | GET | `/sessions/{id}/layout` | current layout JSON |
//! | GET | `/sessions/{id}/render.svg` | top-down SVG |
//! | GET | `/sessions/{id}/metrics` | metrics report |
//! | GET | `/healthz` | liveness |
//!
//! Turns on one session run strictly one at a time: a second request waits
//! for the first. Backend calls run on the blocking pool.

mod store;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use uuid::Uuid;

use llplace_core::api::{CreateSessionRequest, ErrorBody, Health, SessionView, TurnResponse};
use llplace_core::backend::{BackendConfig, BackendError};
use llplace_core::metrics::MetricsReport;
use llplace_core::render::{render_layout, RenderStyle, SVG_CONTENT_TYPE};
use llplace_core::session::{create_session, DesignerSession, EditRequest, SessionError};
use llplace_core::{AssetCatalog, DesignRequest, PromptTemplates, RoomBounds, SceneLayout};

pub use store::SessionStore;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub backend: BackendConfig,
    pub session_ttl: Duration,
    pub sweep_interval: Duration,
    /// Bounds for requests that give none, keyed by lowercase room type.
    pub default_bounds: BTreeMap<String, RoomBounds>,
}

impl ServiceConfig {
    pub fn bounds_for(&self, room_type: &str) -> RoomBounds {
        self.default_bounds
            .get(&room_type.trim().to_lowercase())
            .copied()
            .unwrap_or_else(|| RoomBounds::default_for_room_type(room_type))
    }
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            backend: BackendConfig::default(),
            session_ttl: Duration::from_secs(30 * 60),
            sweep_interval: Duration::from_secs(60),
            default_bounds: BTreeMap::new(),
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    catalog: Arc<AssetCatalog>,
    templates: Arc<PromptTemplates>,
    config: Arc<ServiceConfig>,
    store: SessionStore,
}

impl AppState {
    pub fn new(catalog: AssetCatalog, templates: PromptTemplates, config: &ServiceConfig) -> Self {
        AppState {
            catalog: Arc::new(catalog),
            templates: Arc::new(templates),
            config: Arc::new(config.clone()),
            store: SessionStore::new(config.session_ttl),
        }
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: error.to_string(),
                message: message.into(),
                raw_response: None,
            },
        }
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}"))
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        let raw_response = e.raw_response().map(str::to_string);
        let (status, kind) = match &e {
            SessionError::Retrieval(_) => (StatusCode::UNPROCESSABLE_ENTITY, "retrieval_failed"),
            SessionError::Prompt(_) => (StatusCode::INTERNAL_SERVER_ERROR, "prompt_failed"),
            SessionError::Backend(BackendError::InvalidConfig(_)) => (StatusCode::BAD_REQUEST, "invalid_backend"),
            SessionError::Backend(BackendError::Heuristic(_)) => (StatusCode::UNPROCESSABLE_ENTITY, "placement_failed"),
            SessionError::Backend(_) => (StatusCode::BAD_GATEWAY, "backend_unavailable"),
            SessionError::GenerationFailed { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "generation_failed"),
            SessionError::EditFailed { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "edit_failed"),
            SessionError::UnknownTarget(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_target"),
            SessionError::WrongPhase { .. } => (StatusCode::CONFLICT, "wrong_phase"),
            SessionError::EmptyEdit | SessionError::EmptyRequest => (StatusCode::BAD_REQUEST, "bad_request"),
        };
        ApiError {
            status,
            body: ErrorBody {
                error: kind.to_string(),
                message,
                raw_response,
            },
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(view).delete(remove))
        .route("/sessions/{id}/generate", post(generate))
        .route("/sessions/{id}/edit", post(edit))
        .route("/sessions/{id}/layout", get(layout))
        .route("/sessions/{id}/render.svg", get(render_svg))
        .route("/sessions/{id}/metrics", get(metrics))
        .with_state(state)
}

/// Serves until the listener fails, expiring idle sessions in the background.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState, config: &ServiceConfig) -> std::io::Result<()> {
    let sweeper = state.store.spawn_sweeper(config.sweep_interval);
    let result = axum::serve(listener, router(state)).await;
    sweeper.abort();
    result
}

async fn healthz(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        sessions: state.store.len().await,
    })
}

fn parse_id(id: &str) -> ApiResult<Uuid> {
    Uuid::parse_str(id).map_err(|_| ApiError::not_found(id))
}

async fn entry(state: &AppState, id: &str) -> ApiResult<Arc<store::Entry>> {
    state.store.get(&parse_id(id)?).await.ok_or_else(|| ApiError::not_found(id))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

async fn create(
    State(state): State<AppState>,
    body: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let Json(req) = body?;
    let bounds = req.bounds.unwrap_or_else(|| state.config.bounds_for(&req.room_type));
    let backend = req.backend.clone().unwrap_or_else(|| state.config.backend.clone());
    let catalog = Arc::clone(&state.catalog);
    let templates = Arc::clone(&state.templates);
    // The remote backend owns a blocking HTTP client, so build it off the async workers.
    let session = blocking(move || -> Result<DesignerSession, SessionError> {
        let session_state = create_session(DesignRequest::new(req.room_type, req.items), &catalog, bounds)?;
        let backend_impl = backend.build()?;
        Ok(DesignerSession::new(session_state, backend_impl, templates).with_max_history_chars(backend.max_history_chars))
    })
    .await??;
    let view_state = session.state.clone();
    let id = state.store.insert(session).await;
    log::info!("created session {id}");
    Ok((StatusCode::CREATED, Json(SessionView::of(id.to_string(), &view_state))))
}

async fn view(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let entry = entry(&state, &id).await?;
    let session = entry.session.lock().await;
    Ok(Json(SessionView::of(id, &session.state)))
}

async fn remove(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    if state.store.remove(&parse_id(&id)?).await {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::not_found(&id))
    }
}

async fn generate(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<TurnResponse>> {
    let entry = entry(&state, &id).await?;
    let mut guard = Arc::clone(&entry.session).lock_owned().await;
    let turn = blocking(move || guard.run_generation().map(|layout| (layout, guard.state.phase))).await?;
    let (layout, phase) = turn?;
    Ok(Json(TurnResponse { id, phase, layout }))
}

async fn edit(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<EditRequest>, JsonRejection>,
) -> ApiResult<Json<TurnResponse>> {
    let Json(edit) = body?;
    let entry = entry(&state, &id).await?;
    let catalog = Arc::clone(&state.catalog);
    let mut guard = Arc::clone(&entry.session).lock_owned().await;
    let turn = blocking(move || guard.run_edit(&edit, &catalog).map(|layout| (layout, guard.state.phase))).await?;
    let (layout, phase) = turn?;
    Ok(Json(TurnResponse { id, phase, layout }))
}

async fn current_layout(state: &AppState, id: &str) -> ApiResult<SceneLayout> {
    let entry = entry(state, id).await?;
    let session = entry.session.lock().await;
    session.state.layout.clone().ok_or_else(|| {
        ApiError::new(
            StatusCode::CONFLICT,
            "no_layout",
            format!("session {id} has no layout in phase {}", session.state.phase),
        )
    })
}

async fn layout(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SceneLayout>> {
    Ok(Json(current_layout(&state, &id).await?))
}

async fn render_svg(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let layout = current_layout(&state, &id).await?;
    let svg = render_layout(&layout, &RenderStyle::default());
    Ok(([(header::CONTENT_TYPE, SVG_CONTENT_TYPE)], svg).into_response())
}

async fn metrics(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<MetricsReport>> {
    let layout = current_layout(&state, &id).await?;
    Ok(Json(MetricsReport::compute(&layout)))
}
