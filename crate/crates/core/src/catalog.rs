//! Text-described asset catalog and token-set Jaccard retrieval.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::BBoxDims;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: invalid dims: {message}")]
    InvalidDims { line: usize, message: String },
    #[error("line {line}: duplicate asset id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: empty description for asset {id:?}")]
    EmptyDescription { line: usize, id: String },
    #[error("reading catalog: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("asset catalog is empty")]
    EmptyCatalog,
    #[error("empty object description")]
    EmptyDescription,
    #[error("no asset matches {0:?}")]
    NoMatch(String),
    #[error("invalid quantity {quantity} for {description:?}")]
    InvalidQuantity { description: String, quantity: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetRecord {
    pub id: String,
    pub description: String,
    pub category: String,
    #[serde(rename = "bbox")]
    pub dims: BBoxDims,
    pub path: String,
}

/// `Q_n` copies of an object described by `D_n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestItem {
    pub quantity: u32,
    pub description: String,
}

impl RequestItem {
    pub fn new(quantity: u32, description: impl Into<String>) -> Self {
        RequestItem {
            quantity,
            description: description.into(),
        }
    }

    pub fn one(description: impl Into<String>) -> Self {
        RequestItem::new(1, description)
    }

    fn check(&self) -> Result<(), RetrievalError> {
        if self.description.trim().is_empty() {
            return Err(RetrievalError::EmptyDescription);
        }
        if self.quantity == 0 {
            return Err(RetrievalError::InvalidQuantity {
                description: self.description.clone(),
                quantity: self.quantity,
            });
        }
        Ok(())
    }
}

/// A user request: room type plus quantified object descriptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRequest {
    pub room_type: String,
    pub items: Vec<RequestItem>,
}

impl DesignRequest {
    pub fn new(room_type: impl Into<String>, items: Vec<RequestItem>) -> Self {
        DesignRequest {
            room_type: room_type.into(),
            items,
        }
    }

    pub fn instance_count(&self) -> u64 {
        self.items.iter().map(|i| u64::from(i.quantity)).sum()
    }
}

/// A named object instance bound to the asset it was retrieved as.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub name: String,
    pub asset: AssetRecord,
}

/// Lowercase alphanumeric tokens of `text`.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Instance-name stem for a description: lowercase, whitespace runs become `_`.
pub fn slugify(description: &str) -> String {
    description
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

#[derive(Debug, Clone, Default)]
pub struct AssetCatalog {
    records: Vec<AssetRecord>,
    index: Vec<BTreeSet<String>>,
}

impl AssetCatalog {
    pub fn from_records(records: Vec<AssetRecord>) -> Result<Self, CatalogError> {
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            if !seen.insert(r.id.clone()) {
                return Err(CatalogError::DuplicateId {
                    line: i + 1,
                    id: r.id.clone(),
                });
            }
            if r.description.trim().is_empty() {
                return Err(CatalogError::EmptyDescription {
                    line: i + 1,
                    id: r.id.clone(),
                });
            }
        }
        let index = records.iter().map(|r| tokenize(&r.description)).collect();
        Ok(AssetCatalog { records, index })
    }

    /// Reads one JSON asset record per line. Blank lines are ignored; line
    /// numbers in errors are 1-based.
    pub fn load<R: BufRead>(source: R) -> Result<Self, CatalogError> {
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in source.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: AssetRecord = serde_json::from_str(&line).map_err(|e| {
                let message = e.to_string();
                if message.contains("invalid dims") {
                    CatalogError::InvalidDims {
                        line: line_no,
                        message,
                    }
                } else {
                    CatalogError::Malformed {
                        line: line_no,
                        message,
                    }
                }
            })?;
            if record.description.trim().is_empty() {
                return Err(CatalogError::EmptyDescription {
                    line: line_no,
                    id: record.id,
                });
            }
            if !seen.insert(record.id.clone()) {
                return Err(CatalogError::DuplicateId {
                    line: line_no,
                    id: record.id,
                });
            }
            records.push(record);
        }
        let index = records.iter().map(|r| tokenize(&r.description)).collect();
        Ok(AssetCatalog { records, index })
    }

    pub fn load_path(path: impl AsRef<std::path::Path>) -> Result<Self, CatalogError> {
        let file = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(file))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[AssetRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&AssetRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Best Jaccard match for `description`; ties go to the smallest id.
    pub fn retrieve(&self, description: &str) -> Result<&AssetRecord, RetrievalError> {
        if self.records.is_empty() {
            return Err(RetrievalError::EmptyCatalog);
        }
        let query = tokenize(description);
        if query.is_empty() {
            return Err(RetrievalError::EmptyDescription);
        }
        let mut best: Option<(f64, &AssetRecord)> = None;
        for (record, tokens) in self.records.iter().zip(&self.index) {
            let score = jaccard(&query, tokens);
            if score <= 0.0 {
                continue;
            }
            best = match best {
                Some((s, r)) if s > score || (s == score && r.id <= record.id) => Some((s, r)),
                _ => Some((score, record)),
            };
        }
        best.map(|(_, r)| r)
            .ok_or_else(|| RetrievalError::NoMatch(description.to_string()))
    }

    /// Expands quantities into uniquely named instances.
    pub fn retrieve_many(&self, items: &[RequestItem]) -> Result<Vec<Instance>, RetrievalError> {
        self.retrieve_many_avoiding(items, &HashSet::new())
    }

    /// Like [`retrieve_many`](Self::retrieve_many), but never reuses a name in `reserved`.
    ///
    /// A description contributes `slug` when it yields a single instance in
    /// total and `slug_1 .. slug_Q` otherwise; colliding names take the next
    /// free numeric suffix.
    pub fn retrieve_many_avoiding(
        &self,
        items: &[RequestItem],
        reserved: &HashSet<String>,
    ) -> Result<Vec<Instance>, RetrievalError> {
        let mut resolved: HashMap<&str, &AssetRecord> = HashMap::new();
        let mut slug_totals: HashMap<String, u32> = HashMap::new();
        for item in items {
            item.check()?;
            if !resolved.contains_key(item.description.as_str()) {
                let record = self.retrieve(&item.description)?;
                resolved.insert(item.description.as_str(), record);
            }
            *slug_totals.entry(slugify(&item.description)).or_default() += item.quantity;
        }

        let mut taken: HashSet<String> = reserved.clone();
        let mut counters: HashMap<String, u32> = HashMap::new();
        let mut out = Vec::new();
        for item in items {
            let record = resolved[item.description.as_str()];
            let slug = slugify(&item.description);
            for _ in 0..item.quantity {
                let name = if slug_totals[&slug] == 1 && !taken.contains(&slug) {
                    slug.clone()
                } else {
                    let counter = counters.entry(slug.clone()).or_insert(0);
                    loop {
                        *counter += 1;
                        let candidate = format!("{slug}_{counter}");
                        if !taken.contains(&candidate) {
                            break candidate;
                        }
                    }
                };
                taken.insert(name.clone());
                out.push(Instance {
                    name,
                    asset: record.clone(),
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, description: &str, h: f64) -> String {
        format!(
            r#"{{"id": "{id}", "description": "{description}", "category": "chair", "bbox": {{"h": {h}, "w": 0.5, "d": 0.5}}, "path": "assets/{id}.obj"}}"#
        )
    }

    fn toy() -> AssetCatalog {
        let text = [line("A", "blue wooden chair", 0.9), line("B", "red metal chair", 0.9)].join("\n");
        AssetCatalog::load(text.as_bytes()).unwrap()
    }

    #[test]
    fn empty_stream_loads_empty_catalog() {
        let catalog = AssetCatalog::load("".as_bytes()).unwrap();
        assert_eq!(catalog.len(), 0);
        assert_eq!(catalog.retrieve("chair"), Err(RetrievalError::EmptyCatalog));
    }

    #[test]
    fn preserves_file_order() {
        let text = [line("z", "a", 1.0), line("a", "b", 1.0), line("m", "c", 1.0)].join("\n");
        let catalog = AssetCatalog::load(text.as_bytes()).unwrap();
        let ids: Vec<_> = catalog.records().iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["z", "a", "m"]);
    }

    #[test]
    fn rejects_bad_lines() {
        let text = [line("a", "x", 1.0), line("b", "y", -1.0)].join("\n");
        let err = AssetCatalog::load(text.as_bytes()).unwrap_err();
        assert!(matches!(err, CatalogError::InvalidDims { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("invalid dims"));

        let text = [line("a", "x", 1.0), "{not json".to_string()].join("\n");
        assert!(matches!(
            AssetCatalog::load(text.as_bytes()).unwrap_err(),
            CatalogError::Malformed { line: 2, .. }
        ));

        let text = [line("a", "x", 1.0), line("a", "y", 1.0)].join("\n");
        assert!(matches!(
            AssetCatalog::load(text.as_bytes()).unwrap_err(),
            CatalogError::DuplicateId { line: 2, .. }
        ));
    }

    #[test]
    fn jaccard_retrieval() {
        let catalog = toy();
        assert_eq!(catalog.retrieve("blue wooden chair").unwrap().id, "A");
        // {wooden, chair} vs A: 2/3, vs B: 1/4.
        assert_eq!(catalog.retrieve("wooden chair").unwrap().id, "A");
        assert_eq!(catalog.retrieve("Red  Metal").unwrap().id, "B");
        assert_eq!(catalog.retrieve("chair").unwrap().id, "A");
        assert_eq!(
            catalog.retrieve("piano"),
            Err(RetrievalError::NoMatch("piano".into()))
        );
    }

    #[test]
    fn tie_break_ignores_line_order() {
        let text = [line("B", "red metal chair", 0.9), line("A", "blue wooden chair", 0.9)].join("\n");
        let catalog = AssetCatalog::load(text.as_bytes()).unwrap();
        assert_eq!(catalog.retrieve("chair").unwrap().id, "A");
    }

    #[test]
    fn expands_quantities() {
        let text = [line("bed1", "double bed", 1.0), line("ch", "dining chair", 0.9)].join("\n");
        let catalog = AssetCatalog::load(text.as_bytes()).unwrap();
        let one = catalog.retrieve_many(&[RequestItem::one("double bed")]).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].name, "double_bed");

        let two = catalog.retrieve_many(&[RequestItem::new(2, "dining chair")]).unwrap();
        let names: Vec<_> = two.iter().map(|i| i.name.as_str()).collect();
        assert_eq!(names, ["dining_chair_1", "dining_chair_2"]);
        assert_eq!(two[0].asset, two[1].asset);

        let err = catalog
            .retrieve_many(&[RequestItem::one("bed"), RequestItem::one("unmatchable-zzz")])
            .unwrap_err();
        assert_eq!(err, RetrievalError::NoMatch("unmatchable-zzz".into()));
        assert!(err.to_string().contains("unmatchable-zzz"));
    }

    #[test]
    fn names_stay_unique_across_items_and_reservations() {
        let text = line("ch", "dining chair", 0.9);
        let catalog = AssetCatalog::load(text.as_bytes()).unwrap();
        let items = [RequestItem::one("dining chair"), RequestItem::new(2, "Dining  chair")];
        let names: Vec<_> = catalog
            .retrieve_many(&items)
            .unwrap()
            .into_iter()
            .map(|i| i.name)
            .collect();
        assert_eq!(names, ["dining_chair_1", "dining_chair_2", "dining_chair_3"]);

        let reserved: HashSet<String> = ["dining_chair".to_string()].into();
        let added = catalog
            .retrieve_many_avoiding(&[RequestItem::one("dining chair")], &reserved)
            .unwrap();
        assert_eq!(added[0].name, "dining_chair_1");
    }

    #[test]
    fn rejects_zero_quantity() {
        assert!(matches!(
            toy().retrieve_many(&[RequestItem::new(0, "chair")]),
            Err(RetrievalError::InvalidQuantity { .. })
        ));
    }
}
