//! Input readers and atomic output writers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use tempfile::NamedTempFile;

use llplace_core::{RequestItem, SceneLayout};

use crate::Failure;

pub fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(format!("reading {}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ItemForm {
    Full(RequestItem),
    Bare(String),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ItemsFile {
    List(Vec<ItemForm>),
    Wrapped { items: Vec<ItemForm> },
}

/// Reads `[{"quantity", "description"}, ...]`, a list of bare descriptions,
/// or either wrapped as `{"items": [...]}`.
pub fn read_items(path: &Path) -> Result<Vec<RequestItem>, Failure> {
    let file: ItemsFile = read_json(path)?;
    let (ItemsFile::List(items) | ItemsFile::Wrapped { items }) = file;
    Ok(items
        .into_iter()
        .map(|i| match i {
            ItemForm::Full(item) => item,
            ItemForm::Bare(description) => RequestItem::one(description),
        })
        .collect())
}

/// Reads a layout and re-checks name uniqueness.
pub fn read_layout(path: &Path) -> Result<SceneLayout, Failure> {
    let raw: SceneLayout = read_json(path)?;
    SceneLayout::new(raw.room_type, raw.bounds, raw.objects)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// `dir/stem.suffix` next to `path`, where stem drops the last extension.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Files written together: every temp file is staged first, then all are
/// renamed into place.
#[derive(Default)]
pub struct Staged {
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl Staged {
    pub fn add(&mut self, path: &Path, contents: &str) -> Result<(), Failure> {
        let fail = |e: std::io::Error| Failure::io(format!("writing {}: {e}", path.display()));
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&dir).map_err(fail)?;
        let mut tmp = NamedTempFile::new_in(&dir).map_err(fail)?;
        tmp.write_all(contents.as_bytes()).map_err(fail)?;
        if !contents.ends_with('\n') {
            tmp.write_all(b"\n").map_err(fail)?;
        }
        tmp.as_file().sync_all().map_err(fail)?;
        self.files.push((tmp, path.to_path_buf()));
        Ok(())
    }

    pub fn commit(self) -> Result<Vec<PathBuf>, Failure> {
        let mut written = Vec::new();
        for (tmp, path) in self.files {
            tmp.persist(&path)
                .map_err(|e| Failure::io(format!("writing {}: {}", path.display(), e.error)))?;
            written.push(path);
        }
        Ok(written)
    }
}
