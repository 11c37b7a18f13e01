//! Seeded random collections for property tests, benches and load runs.
//!
//! A [`SynthCollection`] holds a manifest, the mock annotations that make
//! the mock backend rebuild exactly the generated tree, and the tree itself.
//! Detail descriptions draw on vocabulary that appears nowhere else in the
//! tree or in the engine's templates, so a detail only ever comes up in
//! conversation when the engine raises it.

use std::fs;
use std::io;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{
    detail_id, save_json, Aspects, BuildMetadata, CollectionManifest, DetailCategory, MemoryTree, PhotoRecord, Scene,
    SceneActivity, SceneDetail, StorylineEntry, ACTIVITY_CHAR_BUDGET, SCHEMA_VERSION,
};
use crate::gateway::{MockAnnotations, MockDetail, MockPhoto, MockScene, MOCK_ANNOTATIONS_FILE};

const DETAIL_ADJ: &[&str] = &[
    "crimson", "striped", "wooden", "velvet", "silver", "tiny", "rusty", "amber", "woolen", "glossy", "faded",
    "polka", "braided", "marble", "copper", "lilac", "checkered", "crooked", "frosted", "ivory",
];
const DETAIL_NOUN: &[&str] = &[
    "kite", "umbrella", "lantern", "scarf", "teapot", "bicycle", "parrot", "cactus", "signpost", "violin",
    "hammock", "compass", "pretzel", "tortoise", "chandelier", "mailbox", "tulip", "bracelet", "weathervane",
    "carousel", "pumpkin", "telescope", "anchor", "sundial", "accordion",
];
const WHO: &[&str] = &["the family", "two friends", "a group of classmates", "the couple", "grandparents"];
const WHAT: &[&str] = &["have lunch", "walk around", "play games", "take photos", "sing together", "rest"];
const WHERE: &[&str] = &["in a park", "at home", "on a street", "by a lake", "in a hall", "on a hill"];
const WHEN: &[&str] = &["in the morning", "at noon", "in the afternoon", "in the evening"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub scenes: (u32, u32),
    pub details_per_scene: (usize, usize),
    pub photos_per_scene: (usize, usize),
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { scenes: (1, 6), details_per_scene: (0, 5), photos_per_scene: (1, 4) }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCollection {
    pub manifest: CollectionManifest,
    pub annotations: MockAnnotations,
    pub tree: MemoryTree,
}

impl SynthCollection {
    /// Writes `manifest.json`, the mock annotations and one small file per
    /// photo (distinct bytes) under `dir`. Photo paths in the written
    /// manifest are relative to `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir.join("photos"))?;
        for p in &self.manifest.photos {
            fs::write(dir.join(&p.source_path), format!("synthetic image {}", p.photo_id))?;
        }
        save_json(&self.manifest, &dir.join("manifest.json")).map_err(io::Error::other)?;
        save_json(&self.annotations, &dir.join(MOCK_ANNOTATIONS_FILE)).map_err(io::Error::other)?;
        Ok(())
    }
}

pub fn random_tree(seed: u64) -> MemoryTree {
    random_collection(seed, &SynthOptions::default()).tree
}

pub fn random_collection(seed: u64, opts: &SynthOptions) -> SynthCollection {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let collection_id = format!("synth-{seed}");
    let n_scenes = rng.random_range(opts.scenes.0..=opts.scenes.1);

    let mut pairs: Vec<(usize, usize)> =
        (0..DETAIL_ADJ.len()).flat_map(|a| (0..DETAIL_NOUN.len()).map(move |n| (a, n))).collect();
    pairs.shuffle(&mut rng);
    let mut pairs = pairs.into_iter();

    let start: DateTime<Utc> = DateTime::from_timestamp(1_600_000_000, 0).unwrap();
    let mut clock = start;
    let mut photos = Vec::new();
    let mut scenes = Vec::new();
    let mut mock_scenes = Vec::new();
    let mut mock_photos = std::collections::BTreeMap::new();

    for scene_id in 1..=n_scenes {
        let n_photos = rng.random_range(opts.photos_per_scene.0..=opts.photos_per_scene.1);
        let mut ids = Vec::new();
        for _ in 0..n_photos {
            let idx = photos.len();
            let id = format!("p{}", idx + 1);
            clock += Duration::minutes(rng.random_range(1..30));
            photos.push(PhotoRecord {
                photo_id: id.clone(),
                source_path: format!("photos/{id}.jpg").into(),
                timestamp: Some(clock),
                manifest_index: idx,
                cached_description: None,
            });
            mock_photos.insert(id.clone(), MockPhoto { tags: vec![format!("scene{scene_id}")], description: None });
            ids.push(id);
        }
        clock += Duration::hours(2);

        let who = *pick(&mut rng, WHO);
        let what = *pick(&mut rng, WHAT);
        let place = *pick(&mut rng, WHERE);
        let when = *pick(&mut rng, WHEN);
        let sentence = format!("{} {} {} {}.", capitalise(who), what, place, when);
        debug_assert!(sentence.chars().count() <= ACTIVITY_CHAR_BUDGET);
        let activity = SceneActivity {
            sentence,
            aspects: Aspects {
                who: Some(who.to_string()),
                what: Some(what.to_string()),
                when: Some(when.to_string()),
                r#where: Some(place.to_string()),
            },
            reasons: vec![format!("The photos show {who} {place}.")],
            char_budget: ACTIVITY_CHAR_BUDGET,
        };

        let n_details = rng.random_range(opts.details_per_scene.0..=opts.details_per_scene.1);
        let details: Vec<SceneDetail> = (1..=n_details)
            .map(|ord| {
                let (a, n) = pairs.next().expect("detail vocabulary exhausted");
                SceneDetail {
                    detail_id: detail_id(scene_id, ord),
                    category: *pick(&mut rng, &DetailCategory::ALL),
                    description: format!("a {} {}", DETAIL_ADJ[a], DETAIL_NOUN[n]),
                }
            })
            .collect();
        let summary = format!("{} {} {}.", capitalise(who), what, place);

        mock_scenes.push(MockScene {
            photo_ids: ids.clone(),
            activity: activity.clone(),
            shortened_sentence: None,
            details: details.iter().map(|d| MockDetail { category: d.category, description: d.description.clone() }).collect(),
            summary: summary.clone(),
        });
        scenes.push(Scene { scene_id, photo_ids: ids, activity, details, summary_sentence: summary });
    }

    let manifest = CollectionManifest {
        collection_id: collection_id.clone(),
        title: format!("Synthetic collection {seed}"),
        photos,
        portrait_photo: None,
        locale: "en".to_string(),
    };
    let tree = MemoryTree {
        schema_version: SCHEMA_VERSION,
        collection_id,
        storyline: scenes
            .iter()
            .map(|s| StorylineEntry { scene_id: s.scene_id, summary_sentence: s.summary_sentence.clone() })
            .collect(),
        scenes,
        build_metadata: BuildMetadata {
            similarity_threshold: crate::builder::DEFAULT_SIMILARITY_THRESHOLD,
            model_id: "mock".to_string(),
            built_at: DateTime::UNIX_EPOCH,
            source_manifest: None,
        },
    };
    let annotations = MockAnnotations { photos: mock_photos, scenes: mock_scenes, ..Default::default() };
    SynthCollection { manifest, annotations, tree }
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    &xs[rng.random_range(0..xs.len())]
}

fn capitalise(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate_tree;

    #[test]
    fn same_seed_same_tree() {
        assert_eq!(random_tree(7), random_tree(7));
        assert_ne!(random_tree(7), random_tree(8));
    }

    #[test]
    fn generated_trees_validate_against_their_manifest() {
        for seed in 0..50 {
            let c = random_collection(seed, &SynthOptions::default());
            let report = validate_tree(&c.tree, Some(&c.manifest));
            assert!(report.is_valid(), "seed {seed}: {report}");
        }
    }

    #[test]
    fn details_are_unique() {
        let opts = SynthOptions { scenes: (6, 6), details_per_scene: (5, 5), ..Default::default() };
        let tree = random_collection(3, &opts).tree;
        let mut seen = std::collections::BTreeSet::new();
        for d in tree.scenes.iter().flat_map(|s| &s.details) {
            assert!(seen.insert(d.description.clone()));
        }
    }
}
