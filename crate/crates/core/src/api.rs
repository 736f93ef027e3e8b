//! JSON bodies of the session HTTP API, shared by the service and its client.

use serde::{Deserialize, Serialize};

use crate::backend::{BackendConfig, Turn};
use crate::catalog::{Instance, RequestItem};
use crate::scene::{RoomBounds, SceneLayout};
use crate::session::{Phase, SessionState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub room_type: String,
    pub items: Vec<RequestItem>,
    /// Defaults to the room-type bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<RoomBounds>,
    /// Overrides the service's backend for this session.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub phase: Phase,
    pub room_type: String,
    pub bounds: RoomBounds,
    pub instances: Vec<Instance>,
    pub history: Vec<Turn>,
    pub layout: Option<SceneLayout>,
}

impl SessionView {
    pub fn of(id: impl Into<String>, state: &SessionState) -> Self {
        SessionView {
            id: id.into(),
            phase: state.phase,
            room_type: state.request.room_type.clone(),
            bounds: state.bounds,
            instances: state.instances.clone(),
            history: state.history.clone(),
            layout: state.layout.clone(),
        }
    }
}

/// Response of a successful generate or edit turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResponse {
    pub id: String,
    pub phase: Phase,
    pub layout: SceneLayout,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// Stable error kind, e.g. `not_found` or `generation_failed`.
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub sessions: usize,
}
