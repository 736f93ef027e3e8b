//! Layout evaluation: object overlap rate (OOR), bounds and alignment
//! diagnostics, and parsing of external judge scores.
//!
//! Scene OOR is the mean of the pairwise overlap ratio over all unordered
//! object pairs; the maximum is reported alongside. `oob_rate` and
//! `alignment_rate` are geometric diagnostics of this crate, not part of
//! the published metric set.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::scene::{footprint_in_bounds, pair_overlap_ratio, vertical_in_bounds, SceneLayout};

pub const ALIGNMENT_TOLERANCE_DEG: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlappingPair {
    pub a: String,
    pub b: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneOor {
    pub mean: f64,
    pub max: f64,
    pub overlapping_pairs: Vec<OverlappingPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub oor_mean: f64,
    pub oor_max: f64,
    pub overlapping_pairs: Vec<OverlappingPair>,
    pub oob_rate: f64,
    pub alignment_rate: f64,
    pub object_count: usize,
}

impl MetricsReport {
    pub fn compute(layout: &SceneLayout) -> Self {
        let oor = scene_oor(layout);
        MetricsReport {
            oor_mean: oor.mean,
            oor_max: oor.max,
            overlapping_pairs: oor.overlapping_pairs,
            oob_rate: out_of_bounds_rate(layout),
            alignment_rate: alignment_rate(layout),
            object_count: layout.objects.len(),
        }
    }
}

pub fn scene_oor(layout: &SceneLayout) -> SceneOor {
    let objects = &layout.objects;
    let mut sum = 0.0;
    let mut max = 0.0f64;
    let mut pairs = 0usize;
    let mut overlapping_pairs = Vec::new();
    for (i, a) in objects.iter().enumerate() {
        for b in &objects[i + 1..] {
            let ratio = pair_overlap_ratio(a, b);
            sum += ratio;
            max = max.max(ratio);
            pairs += 1;
            if ratio > 0.0 {
                overlapping_pairs.push(OverlappingPair {
                    a: a.name.clone(),
                    b: b.name.clone(),
                    ratio,
                });
            }
        }
    }
    SceneOor {
        mean: if pairs == 0 { 0.0 } else { sum / pairs as f64 },
        max,
        overlapping_pairs,
    }
}

pub fn out_of_bounds_rate(layout: &SceneLayout) -> f64 {
    if layout.objects.is_empty() {
        return 0.0;
    }
    let outside = layout
        .objects
        .iter()
        .filter(|o| !footprint_in_bounds(o, &layout.bounds) || !vertical_in_bounds(o, &layout.bounds))
        .count();
    outside as f64 / layout.objects.len() as f64
}

pub fn is_aligned(yaw: f64) -> bool {
    let r = yaw.rem_euclid(90.0);
    r.min(90.0 - r) <= ALIGNMENT_TOLERANCE_DEG
}

/// Fraction of objects whose yaw is a multiple of 90; 1.0 for an empty layout.
pub fn alignment_rate(layout: &SceneLayout) -> f64 {
    if layout.objects.is_empty() {
        return 1.0;
    }
    let aligned = layout.objects.iter().filter(|o| is_aligned(o.yaw)).count();
    aligned as f64 / layout.objects.len() as f64
}

/// Macro average over scenes: each scene's report counts once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroAverage {
    pub scenes: usize,
    pub oor_mean: f64,
    pub oor_max: f64,
    pub oob_rate: f64,
    pub alignment_rate: f64,
}

pub fn macro_average<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> MacroAverage {
    let mut n = 0usize;
    let (mut mean, mut max, mut oob, mut align) = (0.0, 0.0, 0.0, 0.0);
    for r in reports {
        n += 1;
        mean += r.oor_mean;
        max += r.oor_max;
        oob += r.oob_rate;
        align += r.alignment_rate;
    }
    let div = |v: f64| if n == 0 { 0.0 } else { v / n as f64 };
    MacroAverage {
        scenes: n,
        oor_mean: div(mean),
        oor_max: div(max),
        oob_rate: div(oob),
        alignment_rate: div(align),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeScores {
    pub functionality: f64,
    pub layout_furniture: f64,
    pub aesthetics: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JudgeError {
    #[error("no JSON object in judge response")]
    MalformedJson,
    #[error("judge response has no score for {0:?}")]
    MissingAspect(&'static str),
}

fn normalize_key(key: &str) -> String {
    let mut out = String::new();
    for c in key.chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

const ASPECT_KEYS: [(&str, [&str; 2]); 3] = [
    ("functionality", ["functionality", "functionality_and_activity_based_alignment"]),
    ("layout_furniture", ["layout_furniture", "layout_and_furniture"]),
    ("aesthetics", ["aesthetics", "aesthetics_of_the_room_s_layout"]),
];

fn first_json_object(text: &str) -> Option<serde_json::Map<String, Value>> {
    for (start, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            return Some(map);
        }
    }
    None
}

fn score_value(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
    .filter(|f: &f64| f.is_finite())
}

/// Reads the three aspect scores from the first JSON object in `text`,
/// clamped to `[0, 10]`.
pub fn parse_judge_scores(text: &str) -> Result<JudgeScores, JudgeError> {
    let map = first_json_object(text).ok_or(JudgeError::MalformedJson)?;
    let normalized: Vec<(String, &Value)> = map.iter().map(|(k, v)| (normalize_key(k), v)).collect();
    let mut scores = [0.0; 3];
    for (slot, (aspect, aliases)) in scores.iter_mut().zip(ASPECT_KEYS) {
        let value = normalized
            .iter()
            .find(|(k, _)| aliases.contains(&k.as_str()))
            .and_then(|(_, v)| score_value(v))
            .ok_or(JudgeError::MissingAspect(aspect))?;
        *slot = value.clamp(0.0, 10.0);
    }
    Ok(JudgeScores {
        functionality: scores[0],
        layout_furniture: scores[1],
        aesthetics: scores[2],
    })
}
