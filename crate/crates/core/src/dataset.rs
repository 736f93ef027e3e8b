//! Two-turn dialogue training pairs built from ground-truth scenes.
//!
//! Each scene yields a generation pair and, when some non-essential objects
//! are selected as editable, an add pair (corrupted scene plus the selected
//! objects back to the full scene) and a remove pair (the reverse).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::RequestItem;
use crate::parser::{serialize_block, OutputBlockKind, ParseError, PlacementRecord};
use crate::prompt::{
    compose_edit_instruction, render_add_prompt_for, render_generation_prompt_for, render_remove_prompt, PromptError,
    PromptTemplates, DEFAULT_TURN_END_TOKEN,
};
use crate::scene::{BBoxDims, PlacedObject};

pub const GEN_FILE: &str = "gen.jsonl";
pub const ADD_FILE: &str = "add.jsonl";
pub const REMOVE_FILE: &str = "remove.jsonl";
pub const STATS_FILE: &str = "stats.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("scene {scene_id:?}: {message}")]
    InvalidScene { scene_id: String, message: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid builder config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A ground-truth scene, one JSON object per line in the input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub room_type: String,
    pub objects: Vec<PlacedObject>,
}

impl SceneRecord {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |message: String| DatasetError::InvalidScene {
            scene_id: self.scene_id.clone(),
            message,
        };
        if self.scene_id.is_empty() {
            return Err(invalid("empty scene id".into()));
        }
        if self.objects.is_empty() {
            return Err(invalid("no objects".into()));
        }
        let mut seen = HashSet::new();
        for o in &self.objects {
            if !seen.insert(o.name.as_str()) {
                return Err(invalid(format!("duplicate object name {:?}", o.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Generation,
    AddEdit,
    RemoveEdit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub kind: PairKind,
    pub scene_id: String,
    pub input: String,
    pub label: String,
    pub selected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuilderConfig {
    pub selection_probability: f64,
    /// Edits are built only for scenes with strictly more objects than this.
    pub min_objects_for_edit: usize,
    pub essential_substrings: Vec<String>,
    pub seed: u64,
    pub turn_end_token: String,
    pub emit_add: bool,
    pub emit_remove: bool,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        BuilderConfig {
            selection_probability: 0.4,
            min_objects_for_edit: 4,
            essential_substrings: ["table", "chair", "sofa", "bed", "lamp"].map(String::from).to_vec(),
            seed: 0,
            turn_end_token: DEFAULT_TURN_END_TOKEN.to_string(),
            emit_add: true,
            emit_remove: true,
        }
    }
}

impl BuilderConfig {
    pub fn with_seed(seed: u64) -> Self {
        BuilderConfig {
            seed,
            ..BuilderConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(0.0..=1.0).contains(&self.selection_probability) {
            return Err(DatasetError::InvalidConfig(format!(
                "selection_probability {} outside [0, 1]",
                self.selection_probability
            )));
        }
        Ok(())
    }

    pub fn is_essential(&self, category: &str) -> bool {
        let category = category.to_lowercase();
        self.essential_substrings
            .iter()
            .any(|s| category.contains(&s.to_lowercase()))
    }
}

/// Per-scene generator: ChaCha8 keyed by SHA-256 of the seed (little
/// endian) followed by the scene id bytes.
pub fn scene_rng(seed: u64, scene_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(scene_id.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// One uniform draw in `[0, 1)` per object, in stored order.
pub fn scene_draws(seed: u64, scene_id: &str, count: usize) -> Vec<f64> {
    let mut rng = scene_rng(seed, scene_id);
    (0..count).map(|_| rng.random::<f64>()).collect()
}

/// Names of the objects chosen as editable, given one draw per object.
pub fn select_editable(objects: &[PlacedObject], config: &BuilderConfig, draws: &[f64]) -> Vec<String> {
    if objects.len() <= config.min_objects_for_edit {
        return Vec::new();
    }
    objects
        .iter()
        .zip(draws)
        .filter(|(o, &u)| !config.is_essential(&o.category) && u < config.selection_probability)
        .map(|(o, _)| o.name.clone())
        .collect()
}

fn entries(objects: &[&PlacedObject]) -> Vec<(String, BBoxDims)> {
    objects.iter().map(|o| (o.name.clone(), o.dims)).collect()
}

fn records(objects: &[&PlacedObject]) -> Vec<PlacementRecord> {
    objects.iter().map(|o| PlacementRecord::of(o)).collect()
}

struct ScenePairs {
    pairs: Vec<TrainingPair>,
    eligible: usize,
    selected: usize,
}

fn build_scene(scene: &SceneRecord, templates: &PromptTemplates, config: &BuilderConfig) -> Result<ScenePairs, DatasetError> {
    scene.validate()?;
    let eot = &config.turn_end_token;
    let n = scene.objects.len();
    let eligible = if n > config.min_objects_for_edit {
        scene.objects.iter().filter(|o| !config.is_essential(&o.category)).count()
    } else {
        0
    };
    let draws = if n > config.min_objects_for_edit {
        scene_draws(config.seed, &scene.scene_id, n)
    } else {
        Vec::new()
    };
    let mut selected = select_editable(&scene.objects, config, &draws);
    let selected_count = selected.len();
    // A corrupted scene must keep at least one object to form a prompt.
    if selected.len() == n {
        selected.clear();
    }

    let all: Vec<&PlacedObject> = scene.objects.iter().collect();
    let full_input = render_generation_prompt_for(&scene.room_type, &entries(&all), templates)?;
    let full_records = records(&all);
    let full_label = serialize_block(OutputBlockKind::TaskOutput, &full_records)?;

    let generation = |input: String, label: String| TrainingPair {
        kind: PairKind::Generation,
        scene_id: scene.scene_id.clone(),
        input: input + eot,
        label,
        selected: Vec::new(),
    };

    if selected.is_empty() {
        return Ok(ScenePairs {
            pairs: vec![generation(full_input, full_label)],
            eligible,
            selected: selected_count,
        });
    }

    let chosen: BTreeSet<&str> = selected.iter().map(String::as_str).collect();
    let kept: Vec<&PlacedObject> = all.iter().copied().filter(|o| !chosen.contains(o.name.as_str())).collect();
    let picked: Vec<&PlacedObject> = all.iter().copied().filter(|o| chosen.contains(o.name.as_str())).collect();
    let kept_records = records(&kept);
    let corrupted_label = serialize_block(OutputBlockKind::TaskOutput, &kept_records)?;

    let mut pairs = Vec::new();
    if config.emit_add {
        let corrupted_input = render_generation_prompt_for(&scene.room_type, &entries(&kept), templates)?;
        pairs.push(generation(corrupted_input, corrupted_label.clone()));
        let add_prompt = render_add_prompt_for(&entries(&picked), templates)?;
        pairs.push(TrainingPair {
            kind: PairKind::AddEdit,
            scene_id: scene.scene_id.clone(),
            input: compose_edit_instruction(&corrupted_label, &add_prompt) + eot,
            label: serialize_block(OutputBlockKind::AddedOutput, &full_records)?,
            selected: selected.clone(),
        });
    } else {
        pairs.push(generation(full_input, full_label.clone()));
    }
    if config.emit_remove {
        let removals: Vec<RequestItem> = picked.iter().map(|o| RequestItem::one(o.name.clone())).collect();
        let remove_prompt = render_remove_prompt(&removals, templates)?;
        pairs.push(TrainingPair {
            kind: PairKind::RemoveEdit,
            scene_id: scene.scene_id.clone(),
            input: compose_edit_instruction(&full_label, &remove_prompt) + eot,
            label: serialize_block(OutputBlockKind::DeletedOutput, &kept_records)?,
            selected,
        });
    }
    Ok(ScenePairs {
        pairs,
        eligible,
        selected: selected_count,
    })
}

/// All training pairs for one scene: generation first, then add, then remove.
pub fn build_pairs(
    scene: &SceneRecord,
    templates: &PromptTemplates,
    config: &BuilderConfig,
) -> Result<Vec<TrainingPair>, DatasetError> {
    config.validate()?;
    Ok(build_scene(scene, templates, config)?.pairs)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub generation: usize,
    pub add_edit: usize,
    pub remove_edit: usize,
}

impl KindCounts {
    fn record(&mut self, kind: PairKind) {
        match kind {
            PairKind::Generation => self.generation += 1,
            PairKind::AddEdit => self.add_edit += 1,
            PairKind::RemoveEdit => self.remove_edit += 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub scenes_read: usize,
    pub scenes_used: usize,
    pub skipped_malformed: usize,
    pub skipped_duplicate: usize,
    pub pairs: KindCounts,
    pub per_room_type: BTreeMap<String, KindCounts>,
    /// Non-essential objects in scenes large enough to edit.
    pub eligible_objects: usize,
    pub selected_objects: usize,
    pub selection_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub generation: Vec<TrainingPair>,
    pub add_edit: Vec<TrainingPair>,
    pub remove_edit: Vec<TrainingPair>,
    pub stats: CorpusStats,
}

/// Reads scene lines, skipping blank lines, unreadable records and repeated ids.
pub fn read_scenes<R: BufRead>(source: R, stats: &mut CorpusStats) -> Result<Vec<SceneRecord>, std::io::Error> {
    let mut seen = HashSet::new();
    let mut scenes = Vec::new();
    for (index, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        stats.scenes_read += 1;
        let scene: SceneRecord = match serde_json::from_str(&line) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("scene line {}: skipped: {e}", index + 1);
                stats.skipped_malformed += 1;
                continue;
            }
        };
        if let Err(e) = scene.validate() {
            log::warn!("scene line {}: skipped: {e}", index + 1);
            stats.skipped_malformed += 1;
            continue;
        }
        if !seen.insert(scene.scene_id.clone()) {
            log::warn!("scene line {}: duplicate scene id {:?} skipped", index + 1, scene.scene_id);
            stats.skipped_duplicate += 1;
            continue;
        }
        scenes.push(scene);
    }
    Ok(scenes)
}

/// Builds pairs for every scene, ordered by scene id.
pub fn build_in_memory<R: BufRead>(
    source: R,
    templates: &PromptTemplates,
    config: &BuilderConfig,
) -> Result<Corpus, DatasetError> {
    config.validate()?;
    let mut stats = CorpusStats::default();
    let mut scenes = read_scenes(source, &mut stats).map_err(io_err(Path::new("<scenes>")))?;
    scenes.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));

    let built: Vec<(String, Result<ScenePairs, DatasetError>)> = scenes
        .par_iter()
        .map(|s| (s.room_type.clone(), build_scene(s, templates, config)))
        .collect();

    let mut corpus = Corpus {
        generation: Vec::new(),
        add_edit: Vec::new(),
        remove_edit: Vec::new(),
        stats,
    };
    for (room_type, result) in built {
        let scene = match result {
            Ok(s) => s,
            Err(e) => {
                log::warn!("{e}; scene skipped");
                corpus.stats.skipped_malformed += 1;
                continue;
            }
        };
        corpus.stats.scenes_used += 1;
        corpus.stats.eligible_objects += scene.eligible;
        corpus.stats.selected_objects += scene.selected;
        let per_room = corpus.stats.per_room_type.entry(room_type).or_default();
        for pair in scene.pairs {
            corpus.stats.pairs.record(pair.kind);
            per_room.record(pair.kind);
            match pair.kind {
                PairKind::Generation => corpus.generation.push(pair),
                PairKind::AddEdit => corpus.add_edit.push(pair),
                PairKind::RemoveEdit => corpus.remove_edit.push(pair),
            }
        }
    }
    corpus.stats.selection_rate = if corpus.stats.eligible_objects == 0 {
        0.0
    } else {
        corpus.stats.selected_objects as f64 / corpus.stats.eligible_objects as f64
    };
    Ok(corpus)
}

fn write_jsonl(path: &Path, pairs: &[TrainingPair]) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for pair in pairs {
        let line = serde_json::to_string(pair).expect("pair serialization is infallible");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Builds the corpus and writes `gen.jsonl`, `add.jsonl`, `remove.jsonl`
/// and `stats.json` into `out_dir`.
pub fn build_corpus<R: BufRead>(
    source: R,
    templates: &PromptTemplates,
    config: &BuilderConfig,
    out_dir: &Path,
) -> Result<CorpusStats, DatasetError> {
    let corpus = build_in_memory(source, templates, config)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_jsonl(&out_dir.join(GEN_FILE), &corpus.generation)?;
    write_jsonl(&out_dir.join(ADD_FILE), &corpus.add_edit)?;
    write_jsonl(&out_dir.join(REMOVE_FILE), &corpus.remove_edit)?;
    let stats_path = out_dir.join(STATS_FILE);
    let stats = serde_json::to_string_pretty(&corpus.stats).expect("stats serialization is infallible");
    std::fs::write(&stats_path, stats + "\n").map_err(io_err(&stats_path))?;
    Ok(corpus.stats)
}

pub fn read_pairs(path: &Path) -> Result<Vec<TrainingPair>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| DatasetError::InvalidScene {
                scene_id: String::new(),
                message: format!("{}: {e}", path.display()),
            })
        })
        .collect()
}

/// One JSONL line for `scene`.
pub fn scene_line(scene: &SceneRecord) -> String {
    serde_json::to_string(scene).expect("scene serialization is infallible")
}

/// Placements of a scene in stored order.
pub fn scene_placements(scene: &SceneRecord) -> Vec<PlacementRecord> {
    scene.objects.iter().map(PlacementRecord::of).collect()
}
