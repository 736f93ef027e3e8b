//! The designer dialogue: generation followed by add/remove edit turns.
//!
//! A session moves `Created -> Generated -> Edited*`. A generation whose
//! output fails to parse twice moves it to `Failed`, from which generation
//! may be retried. Edit turns are transactional: a failed edit leaves the
//! layout, phase and history untouched.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, CompletionBackend, CompletionRequest, Role, Turn, TurnContext, DEFAULT_MAX_HISTORY_CHARS};
use crate::catalog::{jaccard, tokenize, AssetCatalog, DesignRequest, Instance, RequestItem, RetrievalError};
use crate::parser::{
    join_placements, layout_placements, parse_output, serialize_layout, ObjectSpec, OutputBlockKind, ParseError,
};
use crate::prompt::{compose_edit_instruction, render_add_prompt, render_generation_prompt, render_remove_prompt, PromptError, PromptTemplates};
use crate::scene::{PlacedObject, RoomBounds, SceneLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Created,
    Generated,
    Edited,
    Failed,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Created => "created",
            Phase::Generated => "generated",
            Phase::Edited => "edited",
            Phase::Failed => "failed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub request: DesignRequest,
    pub bounds: RoomBounds,
    /// Instances currently in the design, in layout order once generated.
    pub instances: Vec<Instance>,
    pub history: Vec<Turn>,
    pub layout: Option<SceneLayout>,
    pub phase: Phase,
    /// Backend calls made so far, including failed ones.
    #[serde(default)]
    pub backend_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "items", rename_all = "snake_case")]
pub enum EditRequest {
    Add(Vec<RequestItem>),
    Remove(Vec<RequestItem>),
}

impl EditRequest {
    pub fn items(&self) -> &[RequestItem] {
        match self {
            EditRequest::Add(items) | EditRequest::Remove(items) => items,
        }
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("generation failed: {error}")]
    GenerationFailed { error: ParseError, raw_response: String },
    #[error("edit failed: {error}")]
    EditFailed { error: ParseError, raw_response: String },
    #[error("no object in the layout matches {0:?}")]
    UnknownTarget(String),
    #[error("{operation} is not allowed in phase {phase}")]
    WrongPhase { operation: &'static str, phase: Phase },
    #[error("edit request has no items")]
    EmptyEdit,
    #[error("design request has no items")]
    EmptyRequest,
}

impl SessionError {
    /// The unparseable backend text for failed turns.
    pub fn raw_response(&self) -> Option<&str> {
        match self {
            SessionError::GenerationFailed { raw_response, .. } | SessionError::EditFailed { raw_response, .. } => {
                Some(raw_response)
            }
            _ => None,
        }
    }
}

/// Resolves the request against the catalog. No backend call is made.
pub fn create_session(
    request: DesignRequest,
    catalog: &AssetCatalog,
    bounds: RoomBounds,
) -> Result<SessionState, SessionError> {
    if request.items.is_empty() {
        return Err(SessionError::EmptyRequest);
    }
    let instances = catalog.retrieve_many(&request.items)?;
    Ok(SessionState {
        request,
        bounds,
        instances,
        history: Vec::new(),
        layout: None,
        phase: Phase::Created,
        backend_calls: 0,
    })
}

/// The most recent whole (instruction, response) pairs fitting in `max_chars`.
pub fn budget_history(history: &[Turn], max_chars: usize) -> &[Turn] {
    let mut start = history.len() - history.len() % 2;
    let mut used = 0usize;
    while start >= 2 {
        let pair: usize = history[start - 2..start].iter().map(|t| t.text.chars().count()).sum();
        if used + pair > max_chars {
            break;
        }
        used += pair;
        start -= 2;
    }
    &history[start..history.len() - history.len() % 2]
}

/// Picks the layout objects named by each removal description.
///
/// Objects are scored by Jaccard similarity between the description and
/// the object's name and category tokens; each item takes its `quantity`
/// best-scoring objects not already chosen, ties going to the smaller name.
pub fn resolve_removals(layout: &SceneLayout, items: &[RequestItem]) -> Result<Vec<String>, SessionError> {
    let candidates: Vec<(&PlacedObject, BTreeSet<String>)> = layout
        .objects
        .iter()
        .map(|o| {
            let mut tokens = tokenize(&o.name);
            tokens.extend(tokenize(&o.category));
            (o, tokens)
        })
        .collect();
    let mut chosen: Vec<String> = Vec::new();
    for item in items {
        if item.description.trim().is_empty() || item.quantity == 0 {
            return Err(SessionError::UnknownTarget(item.description.clone()));
        }
        let query = tokenize(&item.description);
        let mut scored: Vec<(f64, &str)> = candidates
            .iter()
            .filter(|(o, _)| !chosen.contains(&o.name))
            .map(|(o, tokens)| (jaccard(&query, tokens), o.name.as_str()))
            .filter(|(s, _)| *s > 0.0)
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        if scored.len() < item.quantity as usize {
            return Err(SessionError::UnknownTarget(item.description.clone()));
        }
        chosen.extend(scored[..item.quantity as usize].iter().map(|(_, n)| n.to_string()));
    }
    Ok(chosen)
}

type Exchange<T> = Result<(T, String), (ParseError, String)>;

pub struct DesignerSession {
    pub state: SessionState,
    backend: Box<dyn CompletionBackend>,
    templates: Arc<PromptTemplates>,
    max_history_chars: usize,
}

impl fmt::Debug for DesignerSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DesignerSession")
            .field("state", &self.state)
            .field("max_history_chars", &self.max_history_chars)
            .finish_non_exhaustive()
    }
}

impl DesignerSession {
    pub fn new(state: SessionState, backend: Box<dyn CompletionBackend>, templates: Arc<PromptTemplates>) -> Self {
        DesignerSession {
            state,
            backend,
            templates,
            max_history_chars: DEFAULT_MAX_HISTORY_CHARS,
        }
    }

    pub fn with_max_history_chars(mut self, max_chars: usize) -> Self {
        self.max_history_chars = max_chars;
        self
    }

    pub fn into_state(self) -> SessionState {
        self.state
    }

    pub fn layout(&self) -> Option<&SceneLayout> {
        self.state.layout.as_ref()
    }

    /// Sends `instruction` up to twice, returning the first parseable result
    /// with its raw text, or the last parse error with its raw text.
    fn exchange<T>(
        &mut self,
        instruction: &str,
        context: TurnContext<'_>,
        mut parse: impl FnMut(&str) -> Result<T, ParseError>,
    ) -> Result<Exchange<T>, BackendError> {
        let history = budget_history(&self.state.history, self.max_history_chars);
        let request = CompletionRequest {
            instruction,
            history,
            context,
        };
        let mut last = None;
        for _ in 0..2 {
            self.state.backend_calls += 1;
            let response = self.backend.complete(&request)?;
            match parse(&response) {
                Ok(value) => return Ok(Ok((value, response))),
                Err(e) => {
                    log::debug!("unparseable backend response: {e}");
                    last = Some((e, response));
                }
            }
        }
        Ok(Err(last.expect("two attempts")))
    }

    fn commit(&mut self, instruction: String, response: String, layout: SceneLayout, phase: Phase) -> SceneLayout {
        self.state.history.push(Turn {
            role: Role::User,
            text: instruction,
        });
        self.state.history.push(Turn {
            role: Role::Assistant,
            text: response,
        });
        self.state.layout = Some(layout.clone());
        self.state.phase = phase;
        layout
    }

    pub fn run_generation(&mut self) -> Result<SceneLayout, SessionError> {
        if !matches!(self.state.phase, Phase::Created | Phase::Failed) {
            return Err(SessionError::WrongPhase {
                operation: "generation",
                phase: self.state.phase,
            });
        }
        let room_type = self.state.request.room_type.clone();
        let bounds = self.state.bounds;
        let instruction = render_generation_prompt(&room_type, &self.state.instances, &self.templates)?;
        let specs: Vec<ObjectSpec> = self.state.instances.iter().map(ObjectSpec::from).collect();
        let expected: BTreeSet<String> = specs.iter().map(|s| s.name.clone()).collect();
        let context = TurnContext::Generation {
            room_type: &room_type,
            bounds,
            objects: &specs,
        };
        let outcome = self.exchange(&instruction, context, |text| {
            let placements = parse_output(text, OutputBlockKind::TaskOutput, &expected)?;
            join_placements(&specs, &placements, &room_type, bounds)
        })?;
        match outcome {
            Ok((layout, response)) => Ok(self.commit(instruction, response, layout, Phase::Generated)),
            Err((error, raw_response)) => {
                self.state.phase = Phase::Failed;
                self.state.layout = None;
                Err(SessionError::GenerationFailed { error, raw_response })
            }
        }
    }

    pub fn run_edit(&mut self, edit: &EditRequest, catalog: &AssetCatalog) -> Result<SceneLayout, SessionError> {
        let current = match (&self.state.layout, self.state.phase) {
            (Some(layout), Phase::Generated | Phase::Edited) => layout.clone(),
            _ => {
                return Err(SessionError::WrongPhase {
                    operation: "edit",
                    phase: self.state.phase,
                })
            }
        };
        if edit.items().is_empty() {
            return Err(SessionError::EmptyEdit);
        }
        let prior = serialize_layout(&layout_placements(&current)).map_err(|error| SessionError::EditFailed {
            error,
            raw_response: String::new(),
        })?;
        let old_specs: Vec<ObjectSpec> = current.objects.iter().map(ObjectSpec::from).collect();

        match edit {
            EditRequest::Add(items) => {
                let reserved: HashSet<String> = current.objects.iter().map(|o| o.name.clone()).collect();
                let added = catalog.retrieve_many_avoiding(items, &reserved)?;
                let instruction = compose_edit_instruction(&prior, &render_add_prompt(&added, &self.templates)?);
                let add_specs: Vec<ObjectSpec> = added.iter().map(ObjectSpec::from).collect();
                let mut specs = old_specs.clone();
                specs.extend(add_specs.iter().cloned());
                let expected: BTreeSet<String> = specs.iter().map(|s| s.name.clone()).collect();
                let context = TurnContext::Add {
                    layout: &current,
                    additions: &add_specs,
                };
                let outcome = self.exchange(&instruction, context, |text| {
                    let placements = parse_output(text, OutputBlockKind::AddedOutput, &expected)?;
                    join_placements(&specs, &placements, &current.room_type, current.bounds)
                })?;
                let (layout, response) = outcome.map_err(|(error, raw_response)| SessionError::EditFailed {
                    error,
                    raw_response,
                })?;
                self.state.instances.extend(added);
                Ok(self.commit(instruction, response, layout, Phase::Edited))
            }
            EditRequest::Remove(items) => {
                let removed = resolve_removals(&current, items)?;
                let instruction = compose_edit_instruction(&prior, &render_remove_prompt(items, &self.templates)?);
                let specs: Vec<ObjectSpec> =
                    old_specs.into_iter().filter(|s| !removed.contains(&s.name)).collect();
                let expected: BTreeSet<String> = specs.iter().map(|s| s.name.clone()).collect();
                let context = TurnContext::Remove {
                    layout: &current,
                    removed: &removed,
                };
                let outcome = self.exchange(&instruction, context, |text| {
                    let placements = parse_output(text, OutputBlockKind::DeletedOutput, &expected)?;
                    join_placements(&specs, &placements, &current.room_type, current.bounds)
                })?;
                let (layout, response) = outcome.map_err(|(error, raw_response)| SessionError::EditFailed {
                    error,
                    raw_response,
                })?;
                self.state.instances.retain(|i| !removed.contains(&i.name));
                Ok(self.commit(instruction, response, layout, Phase::Edited))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{HeuristicBackend, ReplayBackend};
    use crate::catalog::AssetRecord;
    use crate::placer::{place, PlacerConfig};
    use crate::scene::BBoxDims;

    fn record(id: &str, description: &str, category: &str, h: f64, w: f64, d: f64) -> AssetRecord {
        AssetRecord {
            id: id.into(),
            description: description.into(),
            category: category.into(),
            dims: BBoxDims::new(h, w, d).unwrap(),
            path: format!("assets/{id}.obj"),
        }
    }

    fn catalog() -> AssetCatalog {
        AssetCatalog::from_records(vec![
            record("a1", "double bed with headboard", "bed", 1.1, 1.8, 2.1),
            record("a2", "wooden nightstand", "nightstand", 0.55, 0.45, 0.4),
            record("a3", "tall bookshelf", "bookshelf", 2.0, 0.9, 0.35),
            record("a4", "tv stand", "tv stand", 0.5, 1.6, 0.4),
            record("a5", "dining chair", "chair", 0.9, 0.45, 0.5),
            record("a6", "dining table", "table", 0.75, 1.4, 0.8),
        ])
        .unwrap()
    }

    fn bedroom() -> SessionState {
        let request = DesignRequest::new("Bedroom", vec![RequestItem::one("double bed"), RequestItem::one("nightstand")]);
        create_session(request, &catalog(), RoomBounds::new(2.0, 2.0, 3.0).unwrap()).unwrap()
    }

    fn session(state: SessionState, backend: Box<dyn CompletionBackend>) -> DesignerSession {
        DesignerSession::new(state, backend, Arc::new(PromptTemplates::builtin()))
    }

    const SCRIPTED: &str = "[Task Output][\n    {\"object\": \"double_bed\", \"coordinates\": [{\"x\": 0.00, \"y\": 0.55, \"z\": -0.90}], \"rotate\": [{\"angle\": 0.00}]},\n    {\"object\": \"nightstand\", \"coordinates\": [{\"x\": 1.20, \"y\": 0.28, \"z\": -1.75}], \"rotate\": [{\"angle\": 0.00}]}\n][/Task Output]";

    #[test]
    fn create_expands_quantities() {
        let request = DesignRequest::new("Dining room", vec![RequestItem::new(3, "dining chair")]);
        let state = create_session(request, &catalog(), RoomBounds::new(2.0, 2.0, 3.0).unwrap()).unwrap();
        assert_eq!(state.phase, Phase::Created);
        assert_eq!(state.instances.len(), 3);
        assert!(state.instances.iter().all(|i| i.asset.id == "a5"));
        assert_eq!(state.backend_calls, 0);

        let bad = DesignRequest::new("Bedroom", vec![RequestItem::one("grand piano")]);
        assert!(matches!(
            create_session(bad, &catalog(), RoomBounds::new(2.0, 2.0, 3.0).unwrap()),
            Err(SessionError::Retrieval(RetrievalError::NoMatch(_)))
        ));
    }

    #[test]
    fn replay_generation_applies_script() {
        let mut s = session(bedroom(), Box::new(ReplayBackend::new(vec![SCRIPTED.to_string()])));
        let layout = s.run_generation().unwrap();
        assert_eq!(s.state.phase, Phase::Generated);
        assert_eq!(layout.get("double_bed").unwrap().center.z, -0.90);
        assert_eq!(layout.get("nightstand").unwrap().center.x, 1.20);
        assert_eq!(s.state.history.len(), 2);
        assert_eq!(s.state.history[1].text, SCRIPTED);
    }

    #[test]
    fn garbage_twice_fails_and_keeps_raw() {
        let script = vec!["garbage one".to_string(), "garbage two".to_string()];
        let mut s = session(bedroom(), Box::new(ReplayBackend::new(script)));
        let err = s.run_generation().unwrap_err();
        assert_eq!(err.raw_response(), Some("garbage two"));
        assert_eq!(s.state.phase, Phase::Failed);
        assert!(s.state.layout.is_none());
        assert!(s.state.history.is_empty());
        assert_eq!(s.state.backend_calls, 2);
    }

    #[test]
    fn retry_recovers_on_second_attempt() {
        let script = vec!["nope".to_string(), SCRIPTED.to_string()];
        let mut s = session(bedroom(), Box::new(ReplayBackend::new(script)));
        assert!(s.run_generation().is_ok());
        assert_eq!(s.state.backend_calls, 2);
    }

    #[test]
    fn heuristic_matches_placer() {
        let request = DesignRequest::new("Bedroom", vec![RequestItem::one("double bed")]);
        let bounds = RoomBounds::new(2.0, 2.0, 3.0).unwrap();
        let state = create_session(request, &catalog(), bounds).unwrap();
        let expected = place(&state.instances, "Bedroom", bounds, &PlacerConfig::with_seed(7)).unwrap();
        let mut s = session(state, Box::new(HeuristicBackend::new(PlacerConfig::with_seed(7))));
        assert_eq!(s.run_generation().unwrap(), expected);
    }

    #[test]
    fn heuristic_add_and_remove() {
        let mut s = session(bedroom(), Box::new(HeuristicBackend::new(PlacerConfig::with_seed(3))));
        let before = s.run_generation().unwrap();
        let cat = catalog();
        let added = s.run_edit(&EditRequest::Add(vec![RequestItem::one("a tall bookshelf")]), &cat).unwrap();
        assert_eq!(added.objects.len(), before.objects.len() + 1);
        assert!(added.get("a_tall_bookshelf").is_some());
        for o in &before.objects {
            assert_eq!(added.get(&o.name), Some(o));
        }
        let removed = s.run_edit(&EditRequest::Remove(vec![RequestItem::one("the nightstand")]), &cat).unwrap();
        assert_eq!(removed.objects.len(), 2);
        assert!(removed.get("nightstand").is_none());
        assert_eq!(removed.get("double_bed"), added.get("double_bed"));
        assert_eq!(s.state.phase, Phase::Edited);
        assert_eq!(s.state.history.len(), 6);
        assert!(s.state.history[2].text.starts_with("[Task Output]"));
    }

    #[test]
    fn failed_edit_is_transactional() {
        let script = vec![SCRIPTED.to_string(), "bad".to_string(), "[Added Output][][/Added Output]".to_string()];
        let mut s = session(bedroom(), Box::new(ReplayBackend::new(script)));
        s.run_generation().unwrap();
        let snapshot = s.state.clone();
        let err = s
            .run_edit(&EditRequest::Add(vec![RequestItem::one("tall bookshelf")]), &catalog())
            .unwrap_err();
        assert!(matches!(err, SessionError::EditFailed { .. }));
        assert_eq!(s.state.layout, snapshot.layout);
        assert_eq!(s.state.phase, snapshot.phase);
        assert_eq!(s.state.history, snapshot.history);
        assert_eq!(s.state.instances, snapshot.instances);

        let err = s
            .run_edit(&EditRequest::Remove(vec![RequestItem::one("piano")]), &catalog())
            .unwrap_err();
        assert!(matches!(err, SessionError::UnknownTarget(d) if d == "piano"));
    }

    #[test]
    fn edit_before_generation_is_rejected() {
        let mut s = session(bedroom(), Box::new(ReplayBackend::new(vec![])));
        let err = s.run_edit(&EditRequest::Remove(vec![RequestItem::one("bed")]), &catalog()).unwrap_err();
        assert!(matches!(err, SessionError::WrongPhase { phase: Phase::Created, .. }));
        assert_eq!(s.state.backend_calls, 0);
    }

    #[test]
    fn transport_error_keeps_phase() {
        let mut s = session(bedroom(), Box::new(ReplayBackend::new(vec![])));
        assert!(matches!(s.run_generation(), Err(SessionError::Backend(BackendError::ReplayExhausted))));
        assert_eq!(s.state.phase, Phase::Created);
    }

    #[test]
    fn removal_resolution() {
        let layout = |names: &[(&str, &str)]| {
            let objects = names
                .iter()
                .enumerate()
                .map(|(i, (n, c))| {
                    PlacedObject::new(
                        *n,
                        *c,
                        BBoxDims::new(1.0, 0.5, 0.5).unwrap(),
                        crate::scene::Point3::new(i as f64 - 2.0, 0.5, 0.0).unwrap(),
                        0.0,
                    )
                    .unwrap()
                })
                .collect();
            SceneLayout::new("Living room", RoomBounds::new(3.0, 2.5, 3.0).unwrap(), objects).unwrap()
        };
        let l = layout(&[("sofa", "sofa"), ("tv_stand", "tv stand"), ("dining_chair_1", "chair"), ("dining_chair_2", "chair")]);
        let got = resolve_removals(&l, &[RequestItem::one("a TV stand"), RequestItem::one("one chair")]).unwrap();
        assert_eq!(got, vec!["tv_stand".to_string(), "dining_chair_1".to_string()]);
        let got = resolve_removals(&l, &[RequestItem::new(2, "chair")]).unwrap();
        assert_eq!(got.len(), 2);
        assert!(resolve_removals(&l, &[RequestItem::new(3, "chair")]).is_err());
    }

    #[test]
    fn history_budget_drops_oldest_pairs() {
        let turn = |role, n: usize| Turn {
            role,
            text: "x".repeat(n),
        };
        let history = vec![turn(Role::User, 10), turn(Role::Assistant, 10), turn(Role::User, 3), turn(Role::Assistant, 3)];
        assert_eq!(budget_history(&history, 100).len(), 4);
        assert_eq!(budget_history(&history, 10).len(), 2);
        assert_eq!(budget_history(&history, 5).len(), 0);
    }

    #[test]
    fn edit_request_json_shape() {
        let edit: EditRequest =
            serde_json::from_str(r#"{"kind": "remove", "items": [{"quantity": 1, "description": "a TV stand"}]}"#).unwrap();
        assert_eq!(edit, EditRequest::Remove(vec![RequestItem::one("a TV stand")]));
    }
}
