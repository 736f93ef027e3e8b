//! Async client for the session service.
//!
//! ```no_run
//! # async fn demo() -> Result<(), llplace_client::ClientError> {
//! use llplace_client::Client;
//! use llplace_core::api::CreateSessionRequest;
//! use llplace_core::RequestItem;
//!
//! let client = Client::new("http://127.0.0.1:8080")?;
//! let view = client
//!     .create_session(&CreateSessionRequest {
//!         room_type: "Bedroom".into(),
//!         items: vec![RequestItem::one("double bed")],
//!         bounds: None,
//!         backend: None,
//!     })
//!     .await?;
//! let turn = client.generate(&view.id).await?;
//! println!("{} objects", turn.layout.objects.len());
//! # Ok(())
//! # }
//! ```

use std::time::Duration;

use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use llplace_core::api::{CreateSessionRequest, ErrorBody, Health, SessionView, TurnResponse};
use llplace_core::metrics::MetricsReport;
use llplace_core::{EditRequest, SceneLayout};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid base url {0:?}")]
    InvalidUrl(String),
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("service returned {status}: {}", body.message)]
    Api { status: u16, body: ErrorBody },
    #[error("unexpected response body: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }

    /// Raw backend text carried by failed turns.
    pub fn raw_response(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => body.raw_response.as_deref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    pub fn new(base_url: &str) -> Result<Self, ClientError> {
        Self::with_timeout(base_url, Duration::from_secs(300))
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Result<Self, ClientError> {
        let base = base_url.trim_end_matches('/');
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(ClientError::InvalidUrl(base_url.to_string()));
        }
        let http = reqwest::Client::builder().timeout(timeout).build()?;
        Ok(Client {
            http,
            base: base.to_string(),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn send(&self, method: Method, path: &str, body: Option<&impl Serialize>) -> Result<reqwest::Response, ClientError> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(body) = body {
            req = req.json(body);
        }
        let resp = req.send().await?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status().as_u16();
        let text = resp.text().await?;
        let body = serde_json::from_str(&text).unwrap_or(ErrorBody {
            error: "http".into(),
            message: text,
            raw_response: None,
        });
        Err(ClientError::Api { status, body })
    }

    async fn json<T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&impl Serialize>) -> Result<T, ClientError> {
        let text = self.send(method, path, body).await?.text().await?;
        serde_json::from_str(&text).map_err(|e| ClientError::Decode(format!("{e}: {text}")))
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.json(Method::GET, "/healthz", None::<&()>).await
    }

    pub async fn create_session(&self, request: &CreateSessionRequest) -> Result<SessionView, ClientError> {
        self.json(Method::POST, "/sessions", Some(request)).await
    }

    pub async fn session(&self, id: &str) -> Result<SessionView, ClientError> {
        self.json(Method::GET, &format!("/sessions/{id}"), None::<&()>).await
    }

    pub async fn generate(&self, id: &str) -> Result<TurnResponse, ClientError> {
        self.json(Method::POST, &format!("/sessions/{id}/generate"), None::<&()>).await
    }

    pub async fn edit(&self, id: &str, edit: &EditRequest) -> Result<TurnResponse, ClientError> {
        self.json(Method::POST, &format!("/sessions/{id}/edit"), Some(edit)).await
    }

    pub async fn layout(&self, id: &str) -> Result<SceneLayout, ClientError> {
        self.json(Method::GET, &format!("/sessions/{id}/layout"), None::<&()>).await
    }

    pub async fn metrics(&self, id: &str) -> Result<MetricsReport, ClientError> {
        self.json(Method::GET, &format!("/sessions/{id}/metrics"), None::<&()>).await
    }

    pub async fn render_svg(&self, id: &str) -> Result<String, ClientError> {
        Ok(self
            .send(Method::GET, &format!("/sessions/{id}/render.svg"), None::<&()>)
            .await?
            .text()
            .await?)
    }

    pub async fn delete(&self, id: &str) -> Result<(), ClientError> {
        let resp = self.send(Method::DELETE, &format!("/sessions/{id}"), None::<&()>).await?;
        match resp.status() {
            StatusCode::NO_CONTENT | StatusCode::OK => Ok(()),
            s => Err(ClientError::Decode(format!("unexpected status {s}"))),
        }
    }
}
