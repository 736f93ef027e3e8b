//! Completion backends behind the designer session.
//!
//! `Remote` talks to a chat-completions style HTTP endpoint, `Heuristic`
//! answers every turn with the rule-based placer, and `Replay` returns a
//! fixed script of responses in order.

use std::collections::VecDeque;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::parser::{ObjectSpec, OutputBlockKind};
use crate::placer::{layout_as_response, place_incremental, place_specs, PlacementError, PlacerConfig};
use crate::scene::{RoomBounds, SceneLayout};

pub const ENV_ENDPOINT: &str = "LLPLACE_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "LLPLACE_LLM_MODEL";
pub const ENV_API_KEY: &str = "LLPLACE_LLM_API_KEY";

pub const DEFAULT_MAX_HISTORY_CHARS: usize = 8_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

/// Structured view of the turn for backends that do not read prose.
#[derive(Debug, Clone, Copy)]
pub enum TurnContext<'a> {
    Generation {
        room_type: &'a str,
        bounds: RoomBounds,
        objects: &'a [ObjectSpec],
    },
    Add {
        layout: &'a SceneLayout,
        additions: &'a [ObjectSpec],
    },
    Remove {
        layout: &'a SceneLayout,
        removed: &'a [String],
    },
}

#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub instruction: &'a str,
    pub history: &'a [Turn],
    pub context: TurnContext<'a>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("empty instruction")]
    EmptyInstruction,
    #[error("backend request timed out")]
    Timeout,
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("backend transport error: {0}")]
    Transport(String),
    #[error("replay script exhausted")]
    ReplayExhausted,
    #[error("heuristic placer: {0}")]
    Heuristic(#[from] PlacementError),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

pub trait CompletionBackend: Send {
    fn complete(&mut self, request: &CompletionRequest<'_>) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Heuristic,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub max_history_chars: usize,
    /// Placer seed for the heuristic backend.
    pub seed: u64,
    /// Canned responses for the replay backend.
    pub script: Option<Vec<String>>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Heuristic,
            endpoint: None,
            model: None,
            api_key_env: ENV_API_KEY.to_string(),
            temperature: 0.0,
            timeout_secs: 60,
            max_history_chars: DEFAULT_MAX_HISTORY_CHARS,
            seed: 0,
            script: None,
        }
    }
}

impl BackendConfig {
    pub fn heuristic(seed: u64) -> Self {
        BackendConfig {
            kind: BackendKind::Heuristic,
            seed,
            ..BackendConfig::default()
        }
    }

    pub fn replay(script: Vec<String>) -> Self {
        BackendConfig {
            kind: BackendKind::Replay,
            script: Some(script),
            ..BackendConfig::default()
        }
    }

    pub fn remote(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        BackendConfig {
            kind: BackendKind::Remote,
            endpoint: Some(endpoint.into()),
            model: Some(model.into()),
            ..BackendConfig::default()
        }
    }

    /// Fills a missing endpoint and model from the environment.
    pub fn with_env_defaults(mut self) -> Self {
        if self.endpoint.is_none() {
            self.endpoint = std::env::var(ENV_ENDPOINT).ok().filter(|s| !s.is_empty());
        }
        if self.model.is_none() {
            self.model = std::env::var(ENV_MODEL).ok().filter(|s| !s.is_empty());
        }
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        match self.kind {
            BackendKind::Remote if self.endpoint.is_none() || self.model.is_none() => Err(
                BackendError::InvalidConfig("remote backend requires endpoint and model".into()),
            ),
            BackendKind::Replay if self.script.is_none() => Err(BackendError::InvalidConfig(
                "replay backend requires a script".into(),
            )),
            _ if !(self.temperature.is_finite() && self.temperature >= 0.0) => Err(
                BackendError::InvalidConfig(format!("temperature {}", self.temperature)),
            ),
            _ => Ok(()),
        }
    }

    /// Builds the backend, skipping the first `consumed` replay responses.
    pub fn build_resumed(&self, consumed: usize) -> Result<Box<dyn CompletionBackend>, BackendError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Heuristic => Box::new(HeuristicBackend::new(PlacerConfig::with_seed(self.seed))),
            BackendKind::Replay => {
                let script = self.script.clone().unwrap_or_default();
                Box::new(ReplayBackend::new(script.into_iter().skip(consumed)))
            }
            BackendKind::Remote => Box::new(RemoteBackend::new(self)?),
        })
    }

    pub fn build(&self) -> Result<Box<dyn CompletionBackend>, BackendError> {
        self.build_resumed(0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    script: VecDeque<String>,
}

impl ReplayBackend {
    pub fn new(script: impl IntoIterator<Item = String>) -> Self {
        ReplayBackend {
            script: script.into_iter().collect(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.script.len()
    }
}

impl CompletionBackend for ReplayBackend {
    fn complete(&mut self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        if request.instruction.trim().is_empty() {
            return Err(BackendError::EmptyInstruction);
        }
        self.script.pop_front().ok_or(BackendError::ReplayExhausted)
    }
}

/// Answers with the rule-based placer; the instruction text is ignored.
#[derive(Debug, Clone)]
pub struct HeuristicBackend {
    config: PlacerConfig,
}

impl HeuristicBackend {
    pub fn new(config: PlacerConfig) -> Self {
        HeuristicBackend { config }
    }
}

impl CompletionBackend for HeuristicBackend {
    fn complete(&mut self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        if request.instruction.trim().is_empty() {
            return Err(BackendError::EmptyInstruction);
        }
        let response = match request.context {
            TurnContext::Generation {
                room_type,
                bounds,
                objects,
            } => layout_as_response(
                &place_specs(objects, room_type, bounds, &self.config)?,
                OutputBlockKind::TaskOutput,
            )?,
            TurnContext::Add { layout, additions } => layout_as_response(
                &place_incremental(layout, additions, &self.config)?,
                OutputBlockKind::AddedOutput,
            )?,
            TurnContext::Remove { layout, removed } => {
                let mut survivors = layout.clone();
                survivors.objects.retain(|o| !removed.contains(&o.name));
                layout_as_response(&survivors, OutputBlockKind::DeletedOutput)?
            }
        };
        Ok(response)
    }
}

/// Chat-completions client: posts `{model, messages, temperature}` and
/// returns `choices[0].message.content`.
pub struct RemoteBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    temperature: f64,
}

impl RemoteBackend {
    pub fn new(config: &BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(RemoteBackend {
            client,
            endpoint: config.endpoint.clone().unwrap_or_default(),
            model: config.model.clone().unwrap_or_default(),
            api_key: std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty()),
            temperature: config.temperature,
        })
    }

    fn body(&self, request: &CompletionRequest<'_>) -> Value {
        let mut messages: Vec<Value> = request
            .history
            .iter()
            .map(|t| json!({"role": t.role.as_str(), "content": t.text}))
            .collect();
        messages.push(json!({"role": "user", "content": request.instruction}));
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
        })
    }
}

impl CompletionBackend for RemoteBackend {
    fn complete(&mut self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        if request.instruction.trim().is_empty() {
            return Err(BackendError::EmptyInstruction);
        }
        let mut call = self.client.post(&self.endpoint).json(&self.body(request));
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let response = call.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Transport(format!("response body: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Transport("response has no choices[0].message.content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(instruction: &str) -> (String, Vec<ObjectSpec>) {
        (instruction.to_string(), Vec::new())
    }

    #[test]
    fn replay_pops_in_order() {
        let mut backend = ReplayBackend::new(vec!["X".to_string()]);
        let (instruction, objects) = request("go");
        let req = CompletionRequest {
            instruction: &instruction,
            history: &[],
            context: TurnContext::Generation {
                room_type: "Bedroom",
                bounds: RoomBounds::new(2.0, 2.0, 3.0).unwrap(),
                objects: &objects,
            },
        };
        assert_eq!(backend.complete(&req).unwrap(), "X");
        assert_eq!(backend.complete(&req), Err(BackendError::ReplayExhausted));
    }

    #[test]
    fn config_validation() {
        assert!(BackendConfig {
            kind: BackendKind::Remote,
            ..BackendConfig::default()
        }
        .validate()
        .is_err());
        assert!(BackendConfig {
            kind: BackendKind::Replay,
            ..BackendConfig::default()
        }
        .validate()
        .is_err());
        assert!(BackendConfig::heuristic(1).validate().is_ok());
        let json = r#"{"kind": "remote", "endpoint": "http://localhost:1/v1/chat/completions", "model": "m"}"#;
        let cfg: BackendConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.max_history_chars, DEFAULT_MAX_HISTORY_CHARS);
        assert_eq!(cfg.temperature, 0.0);
        assert_eq!(cfg.api_key_env, ENV_API_KEY);
    }

    #[test]
    fn resumed_replay_skips_consumed() {
        let cfg = BackendConfig::replay(vec!["a".into(), "b".into()]);
        let mut backend = cfg.build_resumed(1).unwrap();
        let objects = Vec::new();
        let req = CompletionRequest {
            instruction: "x",
            history: &[],
            context: TurnContext::Generation {
                room_type: "r",
                bounds: RoomBounds::new(1.0, 1.0, 1.0).unwrap(),
                objects: &objects,
            },
        };
        assert_eq!(backend.complete(&req).unwrap(), "b");
    }
}
