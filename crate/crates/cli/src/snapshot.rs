//! File-based session snapshots written by `generate` and rewritten by `edit`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use llplace_core::backend::BackendConfig;
use llplace_core::SessionState;

use crate::files::read_json;
use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub state: SessionState,
    /// Replay backends resume after `state.backend_calls` responses.
    pub backend: BackendConfig,
    /// `None` means the built-in demo catalog.
    pub catalog: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub layout_path: PathBuf,
    #[serde(default)]
    pub svg: bool,
}

impl SessionSnapshot {
    pub fn read(path: &Path) -> Result<Self, Failure> {
        read_json(path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serialization is infallible")
    }
}
