//! Prompt templates for generation, addition, removal and judging.
//!
//! Templates are plain text with `{{slot}}` placeholders. A template set is
//! a directory holding `manifest.toml`, which names the four text templates,
//! the fixed in-context example and the turn-end token. The built-in set is
//! compiled in from `templates/`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::catalog::{Instance, RequestItem};
use crate::parser::{fmt2, format_placements_json, PlacementRecord};
use crate::scene::BBoxDims;

pub const ROOM_TYPE_OPEN: &str = "[Task Room Type]";
pub const ROOM_TYPE_CLOSE: &str = "[/Task Room Type]";
pub const OBJECTS_OPEN: &str = "[Task Objects & Bounding Box Size]";
pub const OBJECTS_CLOSE: &str = "[/Task Objects & Bounding Box Size]";
pub const ADD_OPEN: &str = "[Add Objects]";
pub const ADD_CLOSE: &str = "[/Add Objects]";
pub const DELETE_OPEN: &str = "[Delete Objects]";
pub const DELETE_CLOSE: &str = "[/Delete Objects]";

pub const DEFAULT_TURN_END_TOKEN: &str = "<|eot_id|>";

/// The eight placement rules every generation template must carry verbatim.
pub const META_RULES: [&str; 8] = [
    "(1) Extract the [Room Type], [Objects], and [Bounding Box Size] from the provided JSON data.",
    "(2) Analyze the spatial relationships among [Objects] within the specified [Room Type]. Pay special attention to avoiding overlap and consider other spatial factors like accessibility and aesthetics.",
    "(3) Determine and design the precise location of all [Objects] ensuring that their bounding boxes do not overlap and that the layout is functional and visually appealing.",
    "(4) I prefer objects to be placed at the edge (the most important constraint) of the room if possible which makes the room look more spacious.",
    "(5) The objects are usually *aligned*.",
    "(6) Chairs must be placed near to the table/desk and face to the table/desk.",
    "(7) The last design output token is the [/Task Output] and only one.",
    "(8) Report your design with detailed 3D space coordinates and rotation angles for each object in JSON format, as follows:",
];

const ROOM_CENTROID_SENTENCE: &str = "The centroid of the room is";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("nothing to render: {0} list is empty")]
    EmptyInput(&'static str),
    #[error("template {template} has no value for slot {slot:?}")]
    MissingSlot { template: &'static str, slot: String },
    #[error("template {template} has an unterminated placeholder")]
    UnterminatedPlaceholder { template: &'static str },
    #[error("template {template} is missing required text {text:?}")]
    MissingRequiredText { template: &'static str, text: String },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("template manifest: {0}")]
    Manifest(String),
    #[error("fixed example: {0}")]
    FixedExample(String),
}

/// The non-retrieved in-context example embedded in every generation prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedExample {
    pub objects: Vec<(String, BBoxDims)>,
    pub output: Vec<PlacementRecord>,
}

#[derive(Deserialize)]
struct RawFixedExample {
    objects: serde_json::Map<String, serde_json::Value>,
    output: Vec<serde_json::Value>,
}

impl FixedExample {
    pub fn from_json(text: &str) -> Result<Self, PromptError> {
        let bad = |e: String| PromptError::FixedExample(e);
        let raw: RawFixedExample = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let objects = raw
            .objects
            .into_iter()
            .map(|(name, dims)| {
                serde_json::from_value::<BBoxDims>(dims)
                    .map(|d| (name, d))
                    .map_err(|e| bad(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let names = objects.iter().map(|(n, _)| n.clone()).collect();
        let output = crate::parser::parse_layout_block(
            &serde_json::Value::Array(raw.output).to_string(),
            &names,
        )
        .map_err(|e| bad(e.to_string()))?;
        Ok(FixedExample { objects, output })
    }
}

#[derive(Debug, Clone)]
pub struct PromptTemplates {
    pub generation_template: String,
    pub add_template: String,
    pub remove_template: String,
    pub judge_template: String,
    pub fixed_example: FixedExample,
    pub turn_end_token: String,
}

#[derive(Deserialize)]
struct Manifest {
    generation: String,
    add: String,
    remove: String,
    judge: String,
    fixed_example: String,
    #[serde(default = "default_turn_end")]
    turn_end_token: String,
}

fn default_turn_end() -> String {
    DEFAULT_TURN_END_TOKEN.to_string()
}

impl PromptTemplates {
    pub fn builtin() -> Self {
        let manifest: Manifest =
            toml::from_str(include_str!("../templates/manifest.toml")).expect("builtin manifest");
        PromptTemplates::new(
            include_str!("../templates/generation.txt"),
            include_str!("../templates/add.txt"),
            include_str!("../templates/remove.txt"),
            include_str!("../templates/judge.txt"),
            include_str!("../templates/fixed_example.json"),
            &manifest.turn_end_token,
        )
        .expect("builtin templates are valid")
    }

    pub fn new(
        generation: &str,
        add: &str,
        remove: &str,
        judge: &str,
        fixed_example_json: &str,
        turn_end_token: &str,
    ) -> Result<Self, PromptError> {
        let templates = PromptTemplates {
            generation_template: generation.to_string(),
            add_template: add.to_string(),
            remove_template: remove.to_string(),
            judge_template: judge.to_string(),
            fixed_example: FixedExample::from_json(fixed_example_json)?,
            turn_end_token: turn_end_token.to_string(),
        };
        templates.validate()?;
        Ok(templates)
    }

    /// Loads a template set from a directory containing `manifest.toml`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| PromptError::Io { path, source })
        };
        let manifest: Manifest =
            toml::from_str(&read("manifest.toml")?).map_err(|e| PromptError::Manifest(e.to_string()))?;
        PromptTemplates::new(
            &read(&manifest.generation)?,
            &read(&manifest.add)?,
            &read(&manifest.remove)?,
            &read(&manifest.judge)?,
            &read(&manifest.fixed_example)?,
            &manifest.turn_end_token,
        )
    }

    fn validate(&self) -> Result<(), PromptError> {
        let require = |template: &'static str, body: &str, texts: &[&str]| {
            for text in texts {
                if !body.contains(text) {
                    return Err(PromptError::MissingRequiredText {
                        template,
                        text: text.to_string(),
                    });
                }
            }
            Ok(())
        };
        require("generation", &self.generation_template, &META_RULES)?;
        require(
            "generation",
            &self.generation_template,
            &[ROOM_CENTROID_SENTENCE, ROOM_TYPE_OPEN, ROOM_TYPE_CLOSE, OBJECTS_OPEN, OBJECTS_CLOSE],
        )?;
        require("add", &self.add_template, &[ADD_OPEN, ADD_CLOSE])?;
        require("remove", &self.remove_template, &[DELETE_OPEN, DELETE_CLOSE])?;
        Ok(())
    }
}

/// Substitutes `{{slot}}` placeholders. Substituted values are not rescanned.
fn fill(template: &str, name: &'static str, slots: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or(PromptError::UnterminatedPlaceholder { template: name })?;
        let slot = after[..end].trim();
        let value = slots
            .iter()
            .find(|(k, _)| *k == slot)
            .map(|(_, v)| *v)
            .ok_or_else(|| PromptError::MissingSlot {
                template: name,
                slot: slot.to_string(),
            })?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization is infallible")
}

/// `{"<name>": {"h": .., "w": .., "d": ..}}`, one entry per line, 2 decimals.
pub fn format_objects_json<'a>(entries: impl IntoIterator<Item = (&'a str, &'a BBoxDims)>) -> String {
    let lines: Vec<String> = entries
        .into_iter()
        .map(|(name, d)| {
            format!(
                r#"    {}: {{"h": {}, "w": {}, "d": {}}}"#,
                json_string(name),
                fmt2(d.h),
                fmt2(d.w),
                fmt2(d.d)
            )
        })
        .collect();
    if lines.is_empty() {
        "{}".to_string()
    } else {
        format!("{{\n{}\n}}", lines.join(",\n"))
    }
}

/// Plain-language removal targets: `[{"object": "<description>", "quantity": q}]`.
pub fn format_removals_json(items: &[RequestItem]) -> String {
    let lines: Vec<String> = items
        .iter()
        .map(|i| {
            format!(
                r#"    {{"object": {}, "quantity": {}}}"#,
                json_string(&i.description),
                i.quantity
            )
        })
        .collect();
    if lines.is_empty() {
        "[]".to_string()
    } else {
        format!("[\n{}\n]", lines.join(",\n"))
    }
}

fn instance_entries(instances: &[Instance]) -> impl Iterator<Item = (&str, &BBoxDims)> {
    instances.iter().map(|i| (i.name.as_str(), &i.asset.dims))
}

pub fn render_generation_prompt_for(
    room_type: &str,
    objects: &[(String, BBoxDims)],
    templates: &PromptTemplates,
) -> Result<String, PromptError> {
    if objects.is_empty() {
        return Err(PromptError::EmptyInput("retrieved objects"));
    }
    let example = &templates.fixed_example;
    let example_objects = format_objects_json(example.objects.iter().map(|(n, d)| (n.as_str(), d)));
    let example_output = format_placements_json(&example.output);
    let task_objects = format_objects_json(objects.iter().map(|(n, d)| (n.as_str(), d)));
    fill(
        &templates.generation_template,
        "generation",
        &[
            ("example_objects", &example_objects),
            ("example_output", &example_output),
            ("room_type", room_type),
            ("objects", &task_objects),
        ],
    )
}

/// The generation instruction for a request and its retrieved instances.
pub fn render_generation_prompt(
    room_type: &str,
    retrieved: &[Instance],
    templates: &PromptTemplates,
) -> Result<String, PromptError> {
    let objects: Vec<(String, BBoxDims)> = instance_entries(retrieved)
        .map(|(n, d)| (n.to_string(), *d))
        .collect();
    render_generation_prompt_for(room_type, &objects, templates)
}

pub fn render_add_prompt_for(
    additions: &[(String, BBoxDims)],
    templates: &PromptTemplates,
) -> Result<String, PromptError> {
    if additions.is_empty() {
        return Err(PromptError::EmptyInput("additions"));
    }
    let objects = format_objects_json(additions.iter().map(|(n, d)| (n.as_str(), d)));
    fill(&templates.add_template, "add", &[("objects", &objects)])
}

pub fn render_add_prompt(additions: &[Instance], templates: &PromptTemplates) -> Result<String, PromptError> {
    let entries: Vec<(String, BBoxDims)> = instance_entries(additions)
        .map(|(n, d)| (n.to_string(), *d))
        .collect();
    render_add_prompt_for(&entries, templates)
}

pub fn render_remove_prompt(removals: &[RequestItem], templates: &PromptTemplates) -> Result<String, PromptError> {
    if removals.is_empty() {
        return Err(PromptError::EmptyInput("removals"));
    }
    let objects = format_removals_json(removals);
    fill(&templates.remove_template, "remove", &[("objects", &objects)])
}

pub fn render_judge_prompt(preferences: &str, templates: &PromptTemplates) -> Result<String, PromptError> {
    if preferences.trim().is_empty() {
        return Err(PromptError::EmptyInput("preferences"));
    }
    fill(&templates.judge_template, "judge", &[("preferences", preferences)])
}

/// An editing instruction: the prior layout block followed by the edit prompt.
pub fn compose_edit_instruction(prior_output_block: &str, edit_prompt: &str) -> String {
    format!("{prior_output_block}\n\n{edit_prompt}")
}

/// Body of the `[Task Objects & Bounding Box Size]` block, parsed back into names and dims.
pub fn parse_objects_block(prompt: &str) -> Option<BTreeMap<String, BBoxDims>> {
    let start = prompt.rfind(OBJECTS_OPEN)? + OBJECTS_OPEN.len();
    let end = prompt[start..].find(OBJECTS_CLOSE)? + start;
    serde_json::from_str(prompt[start..end].trim()).ok()
}
