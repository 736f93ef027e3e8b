//! Indoor layout design around a pluggable completion backend: asset
//! retrieval, prompt rendering, output parsing, dialogue editing, training
//! data construction and layout metrics.

pub mod api;
pub mod backend;
pub mod catalog;
pub mod dataset;
pub mod metrics;
pub mod parser;
pub mod placer;
pub mod prompt;
pub mod render;
pub mod scene;
pub mod session;
pub mod synthetic;

pub use backend::{BackendConfig, BackendError, BackendKind, CompletionBackend};
pub use catalog::{AssetCatalog, AssetRecord, DesignRequest, Instance, RequestItem};
pub use parser::{OutputBlockKind, ParseError, PlacementRecord};
pub use prompt::PromptTemplates;
pub use scene::{BBoxDims, PlacedObject, Point3, RoomBounds, SceneLayout};
pub use session::{DesignerSession, EditRequest, Phase, SessionError, SessionState};
