//! Delimiter-wrapped JSON design output: extraction, validation and the
//! inverse serialization used for labels and round-trips.
//!
//! A design block looks like
//!
//! ```text
//! [Task Output][
//!     {"object": "bed", "coordinates": [{"x": 0.00, "y": 0.40, "z": -1.20}], "rotate": [{"angle": 180.00}]}
//! ][/Task Output]
//! ```
//!
//! Parsing is strict JSON after one repair pass that trims whitespace and
//! strips a surrounding markdown code fence.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::catalog::Instance;
use crate::scene::{normalize_yaw, BBoxDims, PlacedObject, Point3, RoomBounds, SceneLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputBlockKind {
    TaskOutput,
    AddedOutput,
    DeletedOutput,
}

impl OutputBlockKind {
    pub const ALL: [OutputBlockKind; 3] = [
        OutputBlockKind::TaskOutput,
        OutputBlockKind::AddedOutput,
        OutputBlockKind::DeletedOutput,
    ];

    pub fn open(self) -> &'static str {
        match self {
            OutputBlockKind::TaskOutput => "[Task Output]",
            OutputBlockKind::AddedOutput => "[Added Output]",
            OutputBlockKind::DeletedOutput => "[Deleted Output]",
        }
    }

    pub fn close(self) -> &'static str {
        match self {
            OutputBlockKind::TaskOutput => "[/Task Output]",
            OutputBlockKind::AddedOutput => "[/Added Output]",
            OutputBlockKind::DeletedOutput => "[/Deleted Output]",
        }
    }
}

impl fmt::Display for OutputBlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.open())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseError {
    #[error("no {block} block in output")]
    MissingDelimiter { block: OutputBlockKind },
    #[error("{count} closing delimiters for {block}; exactly one is allowed")]
    MultipleOutputBlocks { block: OutputBlockKind, count: usize },
    #[error("{block} opened but never closed")]
    UnterminatedBlock { block: OutputBlockKind },
    #[error("malformed JSON: {message}")]
    MalformedJson { message: String },
    #[error("unknown object {name:?}")]
    UnknownObject { name: String },
    #[error("object set mismatch: missing {missing:?}, duplicated {duplicated:?}")]
    CountMismatch {
        missing: Vec<String>,
        duplicated: Vec<String>,
    },
    #[error("missing field {field:?}")]
    MissingField { field: String },
    #[error("duplicate placement for {name:?}")]
    DuplicatePlacement { name: String },
}

fn malformed(message: impl Into<String>) -> ParseError {
    ParseError::MalformedJson {
        message: message.into(),
    }
}

/// Center and yaw proposed for one named object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub object: String,
    pub coordinates: Point3,
    pub angle: f64,
}

impl PlacementRecord {
    pub fn new(object: impl Into<String>, coordinates: Point3, angle: f64) -> Self {
        PlacementRecord {
            object: object.into(),
            coordinates,
            angle,
        }
    }

    pub fn of(obj: &PlacedObject) -> Self {
        PlacementRecord::new(obj.name.clone(), obj.center, obj.yaw)
    }
}

/// Text strictly between the last opening delimiter of `kind` and the
/// closing delimiter that follows it.
pub fn extract_block(text: &str, kind: OutputBlockKind) -> Result<&str, ParseError> {
    let closers = text.matches(kind.close()).count();
    let last_open = text.rfind(kind.open());
    match (closers, last_open) {
        (0, None) => Err(ParseError::MissingDelimiter { block: kind }),
        (0, Some(_)) => Err(ParseError::UnterminatedBlock { block: kind }),
        (1, None) => Err(ParseError::MissingDelimiter { block: kind }),
        (1, Some(open)) => {
            let start = open + kind.open().len();
            match text[start..].find(kind.close()) {
                Some(end) => Ok(&text[start..start + end]),
                None => Err(ParseError::UnterminatedBlock { block: kind }),
            }
        }
        (count, _) => Err(ParseError::MultipleOutputBlocks { block: kind, count }),
    }
}

fn repair(inner: &str) -> &str {
    let mut s = inner.trim();
    if let Some(rest) = s.strip_prefix("```") {
        let rest = rest.strip_prefix("json").unwrap_or(rest);
        s = rest.strip_suffix("```").unwrap_or(rest).trim();
    }
    s
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value, ParseError> {
    obj.get(name).ok_or_else(|| ParseError::MissingField {
        field: name.to_string(),
    })
}

fn single_element<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Map<String, Value>, ParseError> {
    match field(obj, name)? {
        Value::Array(items) if items.len() == 1 => items[0]
            .as_object()
            .ok_or_else(|| malformed(format!("{name}[0] is not an object"))),
        Value::Array(items) => Err(malformed(format!(
            "{name} must hold exactly one element, found {}",
            items.len()
        ))),
        _ => Err(malformed(format!("{name} is not an array"))),
    }
}

fn number(obj: &Map<String, Value>, name: &str) -> Result<f64, ParseError> {
    field(obj, name)?
        .as_f64()
        .filter(|v| v.is_finite())
        .ok_or_else(|| malformed(format!("{name} is not a finite number")))
}

fn parse_record(value: &Value) -> Result<PlacementRecord, ParseError> {
    let obj = value
        .as_object()
        .ok_or_else(|| malformed("placement record is not an object"))?;
    let object = field(obj, "object")?
        .as_str()
        .ok_or_else(|| malformed("object is not a string"))?
        .to_string();
    let coords = single_element(obj, "coordinates")?;
    let coordinates = Point3::new(number(coords, "x")?, number(coords, "y")?, number(coords, "z")?)
        .map_err(|e| malformed(e.to_string()))?;
    let rotate = single_element(obj, "rotate")?;
    let angle = normalize_yaw(number(rotate, "angle")?);
    Ok(PlacementRecord {
        object,
        coordinates,
        angle,
    })
}

/// Parses a block body into placements whose names are exactly `expected`.
///
/// Accepts one record or an array of records.
pub fn parse_layout_block(
    inner: &str,
    expected: &BTreeSet<String>,
) -> Result<Vec<PlacementRecord>, ParseError> {
    let value: Value = serde_json::from_str(repair(inner)).map_err(|e| malformed(e.to_string()))?;
    let records = match &value {
        Value::Array(items) => items.iter().map(parse_record).collect::<Result<Vec<_>, _>>()?,
        Value::Object(_) => vec![parse_record(&value)?],
        _ => return Err(malformed("expected a placement object or array")),
    };

    if let Some(unknown) = records.iter().find(|r| !expected.contains(&r.object)) {
        return Err(ParseError::UnknownObject {
            name: unknown.object.clone(),
        });
    }
    let mut seen = HashSet::new();
    let mut duplicated = BTreeSet::new();
    for r in &records {
        if !seen.insert(r.object.as_str()) {
            duplicated.insert(r.object.clone());
        }
    }
    let missing: Vec<String> = expected
        .iter()
        .filter(|n| !seen.contains(n.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() || !duplicated.is_empty() {
        return Err(ParseError::CountMismatch {
            missing,
            duplicated: duplicated.into_iter().collect(),
        });
    }
    Ok(records)
}

/// Extracts and parses in one step.
pub fn parse_output(
    text: &str,
    kind: OutputBlockKind,
    expected: &BTreeSet<String>,
) -> Result<Vec<PlacementRecord>, ParseError> {
    parse_layout_block(extract_block(text, kind)?, expected)
}

/// Two-decimal rendering with negative zero folded to zero.
pub fn fmt2(value: f64) -> String {
    let rounded = (value * 100.0).round() / 100.0 + 0.0;
    format!("{rounded:.2}")
}

fn fmt_angle(angle: f64) -> String {
    let rounded = (normalize_yaw(angle) * 100.0).round() / 100.0;
    fmt2(if rounded >= 360.0 { rounded - 360.0 } else { rounded })
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization is infallible")
}

/// The JSON array of placements, one record per line, numbers at 2 decimals.
pub fn format_placements_json(placements: &[PlacementRecord]) -> String {
    if placements.is_empty() {
        return "[]".to_string();
    }
    let lines: Vec<String> = placements
        .iter()
        .map(|p| {
            format!(
                r#"    {{"object": {}, "coordinates": [{{"x": {}, "y": {}, "z": {}}}], "rotate": [{{"angle": {}}}]}}"#,
                json_string(&p.object),
                fmt2(p.coordinates.x),
                fmt2(p.coordinates.y),
                fmt2(p.coordinates.z),
                fmt_angle(p.angle),
            )
        })
        .collect();
    format!("[\n{}\n]", lines.join(",\n"))
}

pub fn serialize_block(kind: OutputBlockKind, placements: &[PlacementRecord]) -> Result<String, ParseError> {
    let mut seen = HashSet::new();
    for p in placements {
        if !seen.insert(p.object.as_str()) {
            return Err(ParseError::DuplicatePlacement {
                name: p.object.clone(),
            });
        }
    }
    Ok(format!(
        "{}{}{}",
        kind.open(),
        format_placements_json(placements),
        kind.close()
    ))
}

/// `[Task Output]` block for `placements`.
pub fn serialize_layout(placements: &[PlacementRecord]) -> Result<String, ParseError> {
    serialize_block(OutputBlockKind::TaskOutput, placements)
}

pub fn layout_placements(layout: &SceneLayout) -> Vec<PlacementRecord> {
    layout.objects.iter().map(PlacementRecord::of).collect()
}

/// The fixed attributes of an object that a placement does not carry.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub name: String,
    pub category: String,
    pub dims: BBoxDims,
}

impl From<&Instance> for ObjectSpec {
    fn from(i: &Instance) -> Self {
        ObjectSpec {
            name: i.name.clone(),
            category: i.asset.category.clone(),
            dims: i.asset.dims,
        }
    }
}

impl From<&PlacedObject> for ObjectSpec {
    fn from(o: &PlacedObject) -> Self {
        ObjectSpec {
            name: o.name.clone(),
            category: o.category.clone(),
            dims: o.dims,
        }
    }
}

/// Joins object specs with placements into a layout, in spec order.
pub fn join_placements(
    specs: &[ObjectSpec],
    placements: &[PlacementRecord],
    room_type: &str,
    bounds: RoomBounds,
) -> Result<SceneLayout, ParseError> {
    let by_name: HashMap<&str, &PlacementRecord> =
        placements.iter().map(|p| (p.object.as_str(), p)).collect();
    let spec_names: HashSet<&str> = specs.iter().map(|s| s.name.as_str()).collect();
    let missing: Vec<String> = specs
        .iter()
        .filter(|s| !by_name.contains_key(s.name.as_str()))
        .map(|s| s.name.clone())
        .collect();
    let extra: Vec<String> = placements
        .iter()
        .filter(|p| !spec_names.contains(p.object.as_str()))
        .map(|p| p.object.clone())
        .collect();
    if !missing.is_empty() || !extra.is_empty() || by_name.len() != placements.len() {
        let mut duplicated = extra;
        let mut seen = HashSet::new();
        duplicated.extend(
            placements
                .iter()
                .filter(|p| !seen.insert(p.object.as_str()))
                .map(|p| p.object.clone()),
        );
        return Err(ParseError::CountMismatch { missing, duplicated });
    }
    let objects = specs
        .iter()
        .map(|s| {
            let p = by_name[s.name.as_str()];
            PlacedObject::new(s.name.clone(), s.category.clone(), s.dims, p.coordinates, p.angle)
                .map_err(|e| malformed(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    SceneLayout::new(room_type, bounds, objects).map_err(|e| malformed(e.to_string()))
}

/// Joins retrieved instances with parsed placements, preserving request order.
pub fn apply_placements(
    instances: &[Instance],
    placements: &[PlacementRecord],
    room_type: &str,
    bounds: RoomBounds,
) -> Result<SceneLayout, ParseError> {
    let specs: Vec<ObjectSpec> = instances.iter().map(ObjectSpec::from).collect();
    join_placements(&specs, placements, room_type, bounds)
}
