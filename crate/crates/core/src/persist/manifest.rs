//! JSON-lines dataset manifests.
//!
//! Line 1 is a header object carrying the corpus seed, the augmentation
//! config digest, and the genre-name table; every following line is one
//! track entry. Augmented entries carry their origin track and transform
//! tag; originals leave both unset.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PersistError;
use crate::audio::Transform;
use crate::models::NUM_CLASSES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ManifestHeader {
    pub seed: u64,
    pub config_digest: String,
    /// Genre names by class index.
    pub genres: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub track_id: String,
    pub path: String,
    pub genre: usize,
    /// Length in samples at the working rate.
    pub duration: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<String>,
    /// Drawn augmentation parameter, when applicable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub entries: Vec<ManifestEntry>,
}

fn format_err(path: &Path, detail: impl Into<String>) -> PersistError {
    PersistError::Format {
        what: "manifest",
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

impl DatasetManifest {
    /// Checks id uniqueness, genre ranges, and referential integrity of
    /// augmented entries.
    pub fn validate(&self) -> Result<(), String> {
        let mut ids = BTreeSet::new();
        for e in &self.entries {
            if !ids.insert(e.track_id.as_str()) {
                return Err(format!("duplicate track id {}", e.track_id));
            }
        }
        let originals: BTreeSet<&str> = self
            .entries
            .iter()
            .filter(|e| e.origin.is_none())
            .map(|e| e.track_id.as_str())
            .collect();
        for e in &self.entries {
            if e.genre >= NUM_CLASSES {
                return Err(format!("track {}: genre {} out of range", e.track_id, e.genre));
            }
            if !self.header.genres.is_empty() && e.genre >= self.header.genres.len() {
                return Err(format!(
                    "track {}: genre {} has no name in the header table",
                    e.track_id, e.genre
                ));
            }
            match (&e.origin, &e.transform) {
                (None, None) => {}
                (Some(origin), Some(tag)) => {
                    if !originals.contains(origin.as_str()) {
                        return Err(format!(
                            "track {}: origin {origin} is not an original entry",
                            e.track_id
                        ));
                    }
                    if Transform::from_tag(tag).is_none() {
                        return Err(format!(
                            "track {}: unknown transform tag {tag}",
                            e.track_id
                        ));
                    }
                }
                _ => {
                    return Err(format!(
                        "track {}: origin and transform must be set together",
                        e.track_id
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn originals(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.origin.is_none())
    }

    pub fn augmented(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.origin.is_some())
    }

    /// Original-entry count per genre index.
    pub fn genre_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0usize; NUM_CLASSES];
        for e in self.originals() {
            if e.genre < NUM_CLASSES {
                counts[e.genre] += 1;
            }
        }
        counts
    }

    /// Serializes to JSON lines: header first, then one entry per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), PersistError> {
        self.validate().map_err(|detail| format_err(path, detail))?;
        super::atomic_write(path, self.to_jsonl().as_bytes())
    }

    pub fn load(path: &Path) -> Result<DatasetManifest, PersistError> {
        let text = std::fs::read_to_string(path).map_err(|source| PersistError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header_line = lines
            .next()
            .ok_or_else(|| format_err(path, "empty manifest"))?;
        let header: ManifestHeader = serde_json::from_str(header_line)
            .map_err(|e| format_err(path, format!("header: {e}")))?;
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let entry: ManifestEntry = serde_json::from_str(line)
                .map_err(|e| format_err(path, format!("line {}: {e}", i + 2)))?;
            entries.push(entry);
        }
        let manifest = DatasetManifest { header, entries };
        manifest
            .validate()
            .map_err(|detail| format_err(path, detail))?;
        Ok(manifest)
    }
}
