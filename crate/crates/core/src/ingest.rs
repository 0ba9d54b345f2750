//! Loading and joining of the files produced by external tooling: scene
//! batches, detection records and image manifests.
//!
//! Loads are all-or-nothing. The first malformed line aborts the load with
//! its line number. An empty file is a valid, empty load.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::model::{validate_scene, DetectionRecord, SceneConfig};

pub fn load_detections(path: &Path) -> Result<Vec<DetectionRecord>> {
    jsonl::read_with(path, |rec: &DetectionRecord| {
        rec.detections
            .iter()
            .enumerate()
            .find_map(|(i, d)| d.violation().map(|v| format!("detection {i}: {v}")))
    })
}

/// Scene batch loader; every scene must pass [`validate_scene`] and ids must
/// be unique within the file.
pub fn load_scenes(path: &Path) -> Result<Vec<SceneConfig>> {
    let mut seen = HashSet::new();
    jsonl::read_with(path, |scene: &SceneConfig| {
        if !seen.insert(scene.id.clone()) {
            return Some(format!("duplicate scene id {}", scene.id));
        }
        let v = validate_scene(scene);
        (!v.is_empty()).then(|| v.join("; "))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_id: Option<String>,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageManifest {
    pub entries: Vec<ManifestEntry>,
}

impl ImageManifest {
    /// Loads a manifest. Relative image paths are resolved against the
    /// manifest's directory; existence is checked only when an image is read.
    pub fn load(path: &Path) -> Result<Self> {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut seen = HashSet::new();
        let mut entries = jsonl::read_with(path, |e: &ManifestEntry| {
            if !seen.insert(e.image_id.clone()) {
                return Some(format!("duplicate image_id {}", e.image_id));
            }
            if e.scene_id.is_none() && e.prompt_id.is_none() {
                return Some(format!("{}: needs scene_id or prompt_id", e.image_id));
            }
            if e.width == Some(0) || e.height == Some(0) {
                return Some(format!("{}: zero image dimension", e.image_id));
            }
            None
        })?;
        for e in &mut entries {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
        }
        Ok(ImageManifest { entries })
    }

    pub fn get(&self, image_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.image_id == image_id)
    }

    /// Entries grouped by prompt id, groups and members in file order.
    pub fn by_prompt(&self) -> Vec<(String, Vec<&ManifestEntry>)> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: HashMap<&str, Vec<&ManifestEntry>> = HashMap::new();
        for e in &self.entries {
            if let Some(p) = &e.prompt_id {
                groups
                    .entry(p.as_str())
                    .or_insert_with(|| {
                        order.push(p.clone());
                        Vec::new()
                    })
                    .push(e);
            }
        }
        order
            .into_iter()
            .map(|p| {
                let members = groups.remove(p.as_str()).unwrap_or_default();
                (p, members)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Joined<'a> {
    pub pairs: Vec<(&'a SceneConfig, &'a DetectionRecord)>,
    pub unmatched_scenes: Vec<&'a SceneConfig>,
    /// Scene ids named by records that match no scene.
    pub unmatched_records: Vec<String>,
}

/// Inner join of scenes and detection records on `scene_id`. Pairs follow
/// scene order.
pub fn join<'a>(scenes: &'a [SceneConfig], records: &'a [DetectionRecord]) -> Result<Joined<'a>> {
    let mut by_scene: HashMap<&str, &DetectionRecord> = HashMap::with_capacity(records.len());
    for rec in records {
        if by_scene.insert(rec.scene_id.as_str(), rec).is_some() {
            return Err(Error::DuplicateRecord(rec.scene_id.clone()));
        }
    }
    let mut out = Joined::default();
    let mut known = HashSet::with_capacity(scenes.len());
    for scene in scenes {
        known.insert(scene.id.as_str());
        match by_scene.get(scene.id.as_str()) {
            Some(rec) => out.pairs.push((scene, *rec)),
            None => out.unmatched_scenes.push(scene),
        }
    }
    out.unmatched_records = records
        .iter()
        .filter(|r| !known.contains(r.scene_id.as_str()))
        .map(|r| r.scene_id.clone())
        .collect();
    Ok(out)
}
