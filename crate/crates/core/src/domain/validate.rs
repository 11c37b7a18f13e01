use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CollectionManifest, MemoryTree, PhotoRecord, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariant {
    SchemaVersion,
    NonEmpty,
    SceneIds,
    Partition,
    Contiguity,
    ChronologicalOrder,
    StorylineCorrespondence,
    DetailIds,
    ActivityBudget,
    Collection,
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Invariant::SchemaVersion => "schema version",
            Invariant::NonEmpty => "non-empty",
            Invariant::SceneIds => "scene ids",
            Invariant::Partition => "partition",
            Invariant::Contiguity => "contiguity",
            Invariant::ChronologicalOrder => "chronological order",
            Invariant::StorylineCorrespondence => "storyline correspondence",
            Invariant::DetailIds => "detail ids",
            Invariant::ActivityBudget => "activity budget",
            Invariant::Collection => "collection",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: Invariant,
    /// Offending id (photo, scene or detail).
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.invariant, self.subject, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, invariant: Invariant) -> bool {
        self.violations.iter().any(|v| v.invariant == invariant)
    }

    fn push(&mut self, invariant: Invariant, subject: impl fmt::Display, message: impl Into<String>) {
        self.violations.push(Violation {
            invariant,
            subject: subject.to_string(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Chronological order of a collection: by timestamp, photos without one
/// after all timestamped photos, ties broken by manifest position.
pub fn chronological_order(photos: &[PhotoRecord]) -> Vec<&PhotoRecord> {
    let mut ordered: Vec<&PhotoRecord> = photos.iter().collect();
    ordered.sort_by(|a, b| {
        let ka = (a.timestamp.is_none(), a.timestamp, a.manifest_index);
        let kb = (b.timestamp.is_none(), b.timestamp, b.manifest_index);
        ka.cmp(&kb)
    });
    ordered
}

/// Checks every Memory Tree invariant. The partition, contiguity and
/// timestamp-order checks need the source manifest and are skipped without
/// one. Violations are data; this never fails.
pub fn validate_tree(tree: &MemoryTree, manifest: Option<&CollectionManifest>) -> ValidationReport {
    let mut report = ValidationReport::default();

    if tree.schema_version != SCHEMA_VERSION {
        report.push(
            Invariant::SchemaVersion,
            tree.schema_version,
            format!("expected schema_version {SCHEMA_VERSION}"),
        );
    }
    if tree.scenes.is_empty() {
        report.push(Invariant::NonEmpty, &tree.collection_id, "tree has no scenes");
    }

    for (pos, scene) in tree.scenes.iter().enumerate() {
        let expected = pos as u32 + 1;
        if scene.scene_id != expected {
            report.push(
                Invariant::SceneIds,
                format!("scene {}", scene.scene_id),
                format!("scene at position {pos} should have id {expected}"),
            );
        }
        if scene.photo_ids.is_empty() {
            report.push(Invariant::NonEmpty, format!("scene {}", scene.scene_id), "scene has no photos");
        }
        let mut seen = HashSet::new();
        for d in &scene.details {
            if !seen.insert(d.detail_id.as_str()) {
                report.push(Invariant::DetailIds, &d.detail_id, "duplicate detail id within scene");
            }
        }
        let chars = scene.activity.sentence.chars().count();
        if chars > scene.activity.char_budget {
            report.push(
                Invariant::ActivityBudget,
                format!("scene {}", scene.scene_id),
                format!("activity sentence has {chars} chars, budget {}", scene.activity.char_budget),
            );
        }
    }

    let mut owner: HashMap<&str, u32> = HashMap::new();
    for scene in &tree.scenes {
        for p in &scene.photo_ids {
            if let Some(prev) = owner.insert(p.as_str(), scene.scene_id) {
                report.push(
                    Invariant::Partition,
                    p,
                    format!("photo appears in scenes {prev} and {}", scene.scene_id),
                );
            }
        }
    }

    check_storyline(tree, &mut report);

    if let Some(manifest) = manifest {
        check_against_manifest(tree, manifest, &owner, &mut report);
    }
    report
}

fn check_storyline(tree: &MemoryTree, report: &mut ValidationReport) {
    let story_ids: Vec<u32> = tree.storyline.iter().map(|e| e.scene_id).collect();
    let scene_ids: Vec<u32> = tree.scenes.iter().map(|s| s.scene_id).collect();
    let mut a = story_ids.clone();
    let mut b = scene_ids.clone();
    a.sort_unstable();
    b.sort_unstable();
    if a != b {
        report.push(
            Invariant::StorylineCorrespondence,
            &tree.collection_id,
            format!("storyline scenes {story_ids:?} do not match tree scenes {scene_ids:?}"),
        );
        return;
    }
    if story_ids != scene_ids {
        report.push(
            Invariant::ChronologicalOrder,
            &tree.collection_id,
            format!("storyline lists scenes {story_ids:?}, expected {scene_ids:?}"),
        );
    }
    for entry in &tree.storyline {
        if let Some(scene) = tree.scene(entry.scene_id) {
            if scene.summary_sentence != entry.summary_sentence {
                report.push(
                    Invariant::StorylineCorrespondence,
                    format!("scene {}", entry.scene_id),
                    "storyline entry differs from the scene's summary sentence",
                );
            }
        }
    }
}

fn check_against_manifest(
    tree: &MemoryTree,
    manifest: &CollectionManifest,
    owner: &HashMap<&str, u32>,
    report: &mut ValidationReport,
) {
    if manifest.collection_id != tree.collection_id {
        report.push(
            Invariant::Collection,
            &tree.collection_id,
            format!("manifest is for collection {:?}", manifest.collection_id),
        );
    }
    let chrono = chronological_order(&manifest.photos);
    let position: HashMap<&str, usize> =
        chrono.iter().enumerate().map(|(i, p)| (p.photo_id.as_str(), i)).collect();

    for p in &chrono {
        if !owner.contains_key(p.photo_id.as_str()) {
            report.push(Invariant::Partition, &p.photo_id, "photo is not assigned to any scene");
        }
    }
    for scene in &tree.scenes {
        for p in &scene.photo_ids {
            if !position.contains_key(p.as_str()) {
                report.push(Invariant::Partition, p, "photo is not part of the collection");
            }
        }
    }

    let mut prev_start: Option<(u32, usize)> = None;
    for scene in &tree.scenes {
        let positions: Vec<usize> =
            scene.photo_ids.iter().filter_map(|p| position.get(p.as_str()).copied()).collect();
        if positions.windows(2).any(|w| w[1] != w[0] + 1) {
            report.push(
                Invariant::Contiguity,
                format!("scene {}", scene.scene_id),
                "photos are not a contiguous run of the chronological order",
            );
        }
        if let Some(&start) = positions.iter().min() {
            if let Some((prev_id, prev)) = prev_start {
                if start < prev {
                    report.push(
                        Invariant::ChronologicalOrder,
                        format!("scene {}", scene.scene_id),
                        format!("starts before scene {prev_id}"),
                    );
                }
            }
            prev_start = Some((scene.scene_id, start));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{
        BuildMetadata, DetailCategory, Scene, SceneActivity, SceneDetail, StorylineEntry,
    };
    use chrono::{TimeZone, Utc};

    fn manifest(n: usize) -> CollectionManifest {
        CollectionManifest {
            collection_id: "c".into(),
            title: String::new(),
            photos: (0..n)
                .map(|i| PhotoRecord {
                    photo_id: format!("p{}", i + 1),
                    source_path: format!("p{}.jpg", i + 1).into(),
                    timestamp: Some(Utc.with_ymd_and_hms(2023, 5, 1, 9, i as u32, 0).unwrap()),
                    manifest_index: i,
                    cached_description: None,
                })
                .collect(),
            portrait_photo: None,
            locale: "en".into(),
        }
    }

    fn scene(id: u32, photos: &[&str], n_details: usize) -> Scene {
        Scene {
            scene_id: id,
            photo_ids: photos.iter().map(|s| s.to_string()).collect(),
            activity: SceneActivity {
                sentence: format!("Activity {id}."),
                aspects: Default::default(),
                reasons: vec![],
                char_budget: 100,
            },
            details: (1..=n_details)
                .map(|d| SceneDetail {
                    detail_id: crate::domain::detail_id(id, d),
                    category: DetailCategory::Others,
                    description: format!("thing {d}"),
                })
                .collect(),
            summary_sentence: format!("Summary {id}."),
        }
    }

    fn fixture() -> MemoryTree {
        let scenes = vec![
            scene(1, &["p1", "p2"], 2),
            scene(2, &["p3", "p4", "p5"], 3),
            scene(3, &["p6"], 1),
        ];
        MemoryTree {
            schema_version: SCHEMA_VERSION,
            collection_id: "c".into(),
            storyline: scenes
                .iter()
                .map(|s| StorylineEntry { scene_id: s.scene_id, summary_sentence: s.summary_sentence.clone() })
                .collect(),
            scenes,
            build_metadata: BuildMetadata {
                similarity_threshold: 0.5,
                model_id: "mock".into(),
                built_at: Utc.timestamp_opt(0, 0).unwrap(),
                source_manifest: None,
            },
        }
    }

    #[test]
    fn well_formed_tree_has_empty_report() {
        let report = validate_tree(&fixture(), Some(&manifest(6)));
        assert!(report.is_valid(), "{report}");
    }

    #[test]
    fn omitted_photo_is_a_partition_violation_naming_it() {
        let mut t = fixture();
        t.scenes[1].photo_ids.retain(|p| p != "p5");
        let report = validate_tree(&t, Some(&manifest(6)));
        assert!(report
            .violations
            .iter()
            .any(|v| v.invariant == Invariant::Partition && v.subject == "p5"));
        assert_eq!(report.violations[0].invariant.to_string(), "partition");
    }

    #[test]
    fn shuffled_storyline_breaks_chronological_order() {
        let mut t = fixture();
        t.storyline.swap(0, 1);
        let report = validate_tree(&t, None);
        assert!(report.has(Invariant::ChronologicalOrder));
        assert!(report.to_string().contains("chronological order"));
    }

    #[test]
    fn duplicate_photo_and_overlong_sentence_are_reported() {
        let mut t = fixture();
        t.scenes[2].photo_ids.push("p1".into());
        t.scenes[0].activity.sentence = "x".repeat(101);
        let report = validate_tree(&t, None);
        assert!(report.has(Invariant::Partition));
        assert!(report.has(Invariant::ActivityBudget));
    }

    #[test]
    fn non_contiguous_scene_is_reported() {
        let mut t = fixture();
        t.scenes[0].photo_ids = vec!["p1".into(), "p3".into()];
        t.scenes[1].photo_ids = vec!["p2".into(), "p4".into(), "p5".into()];
        let report = validate_tree(&t, Some(&manifest(6)));
        assert!(report.has(Invariant::Contiguity));
    }

    #[test]
    fn missing_timestamps_sort_last_in_manifest_order() {
        let mut m = manifest(4);
        m.photos[0].timestamp = None;
        m.photos[2].timestamp = None;
        let ids: Vec<&str> = chronological_order(&m.photos).iter().map(|p| p.photo_id.as_str()).collect();
        assert_eq!(ids, ["p2", "p4", "p1", "p3"]);
    }
}
