//! Core data model: photo collections, Memory Trees and chat sessions.

mod persist;
mod session;
mod validate;

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use persist::{load_manifest, load_tree, save_json, save_tree, TreeIoError, SCHEMA_VERSION};
pub use session::{
    Annotations, ChatTurn, EngineKind, GuidanceKind, InputKind, Phase, SessionState, Speaker,
    Transcript,
};
pub use validate::{chronological_order, validate_tree, Invariant, ValidationReport, Violation};

/// Default character budget of a scene activity sentence.
pub const ACTIVITY_CHAR_BUDGET: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotoRecord {
    pub photo_id: String,
    pub source_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<DateTime<Utc>>,
    #[serde(default)]
    pub manifest_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cached_description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionManifest {
    pub collection_id: String,
    #[serde(default)]
    pub title: String,
    pub photos: Vec<PhotoRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub portrait_photo: Option<PathBuf>,
    #[serde(default = "default_locale")]
    pub locale: String,
}

fn default_locale() -> String {
    "en".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ManifestError {
    #[error("collection has no photos")]
    Empty,
    #[error("duplicate photo_id {0:?}")]
    DuplicatePhoto(String),
    #[error("manifest_index values are not dense 0..n")]
    SparseIndex,
    #[error("portrait {0:?} is also listed as a collection photo")]
    PortraitInCollection(PathBuf),
}

impl CollectionManifest {
    /// Reassigns `manifest_index` from list position and resolves relative
    /// photo paths against `base_dir`.
    pub fn normalize(&mut self, base_dir: Option<&Path>) {
        for (i, p) in self.photos.iter_mut().enumerate() {
            p.manifest_index = i;
            if let Some(dir) = base_dir {
                if p.source_path.is_relative() {
                    p.source_path = dir.join(&p.source_path);
                }
            }
        }
        if let (Some(dir), Some(portrait)) = (base_dir, self.portrait_photo.as_mut()) {
            if portrait.is_relative() {
                *portrait = dir.join(&*portrait);
            }
        }
    }

    pub fn check(&self) -> Result<(), ManifestError> {
        if self.photos.is_empty() {
            return Err(ManifestError::Empty);
        }
        let mut ids = HashSet::new();
        let mut indices = HashSet::new();
        for p in &self.photos {
            if !ids.insert(p.photo_id.as_str()) {
                return Err(ManifestError::DuplicatePhoto(p.photo_id.clone()));
            }
            if p.manifest_index >= self.photos.len() || !indices.insert(p.manifest_index) {
                return Err(ManifestError::SparseIndex);
            }
        }
        if let Some(portrait) = &self.portrait_photo {
            if self.photos.iter().any(|p| &p.source_path == portrait) {
                return Err(ManifestError::PortraitInCollection(portrait.clone()));
            }
        }
        Ok(())
    }

    pub fn photo(&self, photo_id: &str) -> Option<&PhotoRecord> {
        self.photos.iter().find(|p| p.photo_id == photo_id)
    }
}

/// The four activity aspects; each is optional since not every scene
/// reveals all of them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aspects {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub who: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub what: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r#where: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneActivity {
    pub sentence: String,
    #[serde(default)]
    pub aspects: Aspects,
    #[serde(default)]
    pub reasons: Vec<String>,
    #[serde(default = "default_budget")]
    pub char_budget: usize,
}

fn default_budget() -> usize {
    ACTIVITY_CHAR_BUDGET
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetailCategory {
    People,
    Food,
    Animals,
    Plants,
    Buildings,
    Texts,
    Others,
}

impl DetailCategory {
    pub const ALL: [DetailCategory; 7] = [
        DetailCategory::People,
        DetailCategory::Food,
        DetailCategory::Animals,
        DetailCategory::Plants,
        DetailCategory::Buildings,
        DetailCategory::Texts,
        DetailCategory::Others,
    ];

    /// Lenient parse for model output; anything unrecognised is `Others`.
    pub fn from_label(label: &str) -> Self {
        match label.trim().to_ascii_lowercase().trim_end_matches('s') {
            "people" | "person" => DetailCategory::People,
            "food" => DetailCategory::Food,
            "animal" => DetailCategory::Animals,
            "plant" => DetailCategory::Plants,
            "building" => DetailCategory::Buildings,
            "text" => DetailCategory::Texts,
            _ => DetailCategory::Others,
        }
    }
}

impl fmt::Display for DetailCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DetailCategory::People => "people",
            DetailCategory::Food => "food",
            DetailCategory::Animals => "animals",
            DetailCategory::Plants => "plants",
            DetailCategory::Buildings => "buildings",
            DetailCategory::Texts => "texts",
            DetailCategory::Others => "others",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneDetail {
    pub detail_id: String,
    pub category: DetailCategory,
    pub description: String,
}

/// Deterministic detail id, `s{scene}-d{ordinal}` with a 1-based ordinal.
pub fn detail_id(scene_id: u32, ordinal: usize) -> String {
    format!("s{scene_id}-d{ordinal}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: u32,
    pub photo_ids: Vec<String>,
    pub activity: SceneActivity,
    #[serde(default)]
    pub details: Vec<SceneDetail>,
    pub summary_sentence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorylineEntry {
    pub scene_id: u32,
    pub summary_sentence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildMetadata {
    pub similarity_threshold: f64,
    pub model_id: String,
    pub built_at: DateTime<Utc>,
    /// Manifest the tree was built from, so chat front-ends can find the
    /// photo files again. Paths only; no image data lives in the tree.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryTree {
    pub schema_version: u32,
    pub collection_id: String,
    pub storyline: Vec<StorylineEntry>,
    pub scenes: Vec<Scene>,
    pub build_metadata: BuildMetadata,
}

impl MemoryTree {
    pub fn scene(&self, scene_id: u32) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.scene_id == scene_id)
    }

    pub fn scene_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.scenes.iter().map(|s| s.scene_id)
    }

    pub fn last_scene_id(&self) -> u32 {
        self.scenes.last().map_or(1, |s| s.scene_id)
    }

    /// Scene containing `photo_id`, if any.
    pub fn scene_of_photo(&self, photo_id: &str) -> Option<u32> {
        self.scenes
            .iter()
            .find(|s| s.photo_ids.iter().any(|p| p == photo_id))
            .map(|s| s.scene_id)
    }

    pub fn detail_count(&self) -> usize {
        self.scenes.iter().map(|s| s.details.len()).sum()
    }
}
