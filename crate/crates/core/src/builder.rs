//! Memory Tree construction: order the photos, segment them into scenes by
//! adjacent-pair activity similarity, extract each scene's activity and
//! details, then summarise the scenes into a storyline.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::{
    chronological_order, validate_tree, BuildMetadata, CollectionManifest, ManifestError, MemoryTree,
    PhotoRecord, Scene, StorylineEntry, ValidationReport, ACTIVITY_CHAR_BUDGET, SCHEMA_VERSION,
};
use crate::exec::Exec;
use crate::gateway::{Gateway, GatewayError, StorylineScene};

pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("invalid manifest: {0}")]
    Manifest(#[from] ManifestError),
    #[error("similarity threshold {0} is outside (0, 1]")]
    Threshold(f64),
    #[error("segmentation failed on pair ({a}, {b}): {source}")]
    Segmentation {
        a: String,
        b: String,
        #[source]
        source: GatewayError,
    },
    #[error("extraction failed for scene {scene_id}: {source}")]
    Extraction {
        scene_id: u32,
        #[source]
        source: GatewayError,
    },
    #[error("storyline generation failed: {0}")]
    Storyline(#[source] GatewayError),
    #[error("built tree is invalid: {0}")]
    Invalid(ValidationReport),
}

/// Rates how likely two adjacent photos show the same activity, in [0, 1].
/// The model-backed gateway is one implementation; an embedding-distance
/// scorer can stand in without touching the thresholding.
pub trait PairScorer: Sync {
    fn score_pair(&self, a: &PhotoRecord, b: &PhotoRecord) -> Result<f64, GatewayError>;
}

impl PairScorer for Gateway {
    fn score_pair(&self, a: &PhotoRecord, b: &PhotoRecord) -> Result<f64, GatewayError> {
        self.score_similarity(a, b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    /// Cut after index `i`: photos `i` and `i + 1` are in different scenes.
    pub boundaries: BTreeSet<usize>,
    /// `pair_scores[i]` rates photos `i` and `i + 1`.
    pub pair_scores: Vec<f64>,
}

impl SegmentationResult {
    pub fn from_scores(pair_scores: Vec<f64>, threshold: f64) -> Self {
        SegmentationResult { boundaries: cut_points(&pair_scores, threshold), pair_scores }
    }

    pub fn scene_count(&self) -> usize {
        self.boundaries.len() + 1
    }

    /// Index ranges of the scenes over `pair_scores.len() + 1` photos.
    pub fn scene_ranges(&self) -> Vec<Range<usize>> {
        scene_ranges(self.pair_scores.len() + 1, &self.boundaries)
    }
}

/// Boundary at `i` iff `scores[i] < threshold`. Equal scores do not split.
pub fn cut_points(scores: &[f64], threshold: f64) -> BTreeSet<usize> {
    scores.iter().enumerate().filter(|(_, s)| **s < threshold).map(|(i, _)| i).collect()
}

pub fn scene_ranges(n: usize, boundaries: &BTreeSet<usize>) -> Vec<Range<usize>> {
    let mut out = Vec::with_capacity(boundaries.len() + 1);
    let mut start = 0;
    for &b in boundaries.iter().filter(|&&b| b + 1 < n) {
        out.push(start..b + 1);
        start = b + 1;
    }
    if n > 0 {
        out.push(start..n);
    }
    out
}

fn check_threshold(threshold: f64) -> Result<(), BuildError> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(BuildError::Threshold(threshold))
    }
}

/// Photos in chronological order (timestamp, then manifest position; photos
/// without a timestamp go last).
pub fn order_photos(manifest: &CollectionManifest) -> Vec<PhotoRecord> {
    chronological_order(&manifest.photos).into_iter().cloned().collect()
}

/// Scores every adjacent pair (fanned out per `exec`, results kept in pair
/// order) and cuts wherever the score falls below `threshold`.
pub fn segment_scenes(
    ordered: &[PhotoRecord],
    scorer: &dyn PairScorer,
    threshold: f64,
    exec: Exec,
) -> Result<SegmentationResult, BuildError> {
    check_threshold(threshold)?;
    let pairs = ordered.len().saturating_sub(1);
    let scores = exec.map_range(pairs, |i| {
        let (a, b) = (&ordered[i], &ordered[i + 1]);
        scorer.score_pair(a, b).map_err(|source| BuildError::Segmentation {
            a: a.photo_id.clone(),
            b: b.photo_id.clone(),
            source,
        })
    });
    let scores = scores.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(SegmentationResult::from_scores(scores, threshold))
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub threshold: f64,
    pub exec: Exec,
    pub char_budget: usize,
    /// Recorded in the build metadata. Fixed values make rebuilds
    /// byte-identical.
    pub built_at: DateTime<Utc>,
    pub source_manifest: Option<PathBuf>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            threshold: DEFAULT_SIMILARITY_THRESHOLD,
            exec: Exec::default(),
            char_budget: ACTIVITY_CHAR_BUDGET,
            built_at: DateTime::<Utc>::UNIX_EPOCH,
            source_manifest: None,
        }
    }
}

/// Runs the full pipeline. `portrait` overrides the manifest's portrait.
/// Any gateway failure aborts the build; the returned tree always passes
/// [`validate_tree`] against `manifest`.
pub fn build_memory_tree(
    manifest: &CollectionManifest,
    portrait: Option<&Path>,
    gateway: &Gateway,
    opts: &BuildOptions,
) -> Result<MemoryTree, BuildError> {
    manifest.check()?;
    check_threshold(opts.threshold)?;
    let portrait = portrait.or(manifest.portrait_photo.as_deref());

    let ordered = order_photos(manifest);
    let segmentation = segment_scenes(&ordered, gateway, opts.threshold, opts.exec)?;
    let ranges = segmentation.scene_ranges();
    tracing::info!(
        collection = %manifest.collection_id,
        photos = ordered.len(),
        scenes = ranges.len(),
        "segmented collection"
    );

    let extracted = opts
        .exec
        .map_range(ranges.len(), |i| {
            let scene_id = i as u32 + 1;
            let photos: Vec<&PhotoRecord> = ordered[ranges[i].clone()].iter().collect();
            gateway
                .extract_scene_info(scene_id, &photos, portrait, opts.char_budget)
                .map_err(|source| BuildError::Extraction { scene_id, source })
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let story_inputs: Vec<StorylineScene> = ranges
        .iter()
        .zip(&extracted)
        .enumerate()
        .map(|(i, (range, (activity, _)))| StorylineScene {
            scene_id: i as u32 + 1,
            photo_ids: ordered[range.clone()].iter().map(|p| p.photo_id.clone()).collect(),
            activity_sentence: activity.sentence.clone(),
        })
        .collect();
    let activities: Vec<_> = extracted.iter().map(|(a, _)| a).collect();
    let summaries = gateway.generate_storyline(&story_inputs, &activities).map_err(BuildError::Storyline)?;

    let scenes: Vec<Scene> = story_inputs
        .into_iter()
        .zip(extracted)
        .zip(summaries)
        .map(|((input, (activity, details)), summary)| Scene {
            scene_id: input.scene_id,
            photo_ids: input.photo_ids,
            activity,
            details,
            summary_sentence: summary,
        })
        .collect();
    let tree = MemoryTree {
        schema_version: SCHEMA_VERSION,
        collection_id: manifest.collection_id.clone(),
        storyline: scenes
            .iter()
            .map(|s| StorylineEntry { scene_id: s.scene_id, summary_sentence: s.summary_sentence.clone() })
            .collect(),
        scenes,
        build_metadata: BuildMetadata {
            similarity_threshold: opts.threshold,
            model_id: gateway.model_id().to_string(),
            built_at: opts.built_at,
            source_manifest: opts.source_manifest.clone(),
        },
    };
    let report = validate_tree(&tree, Some(manifest));
    if !report.is_valid() {
        return Err(BuildError::Invalid(report));
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;
    use std::sync::Mutex;

    fn photo(i: usize, minute: Option<u32>) -> PhotoRecord {
        PhotoRecord {
            photo_id: format!("p{}", i + 1),
            source_path: format!("p{}.jpg", i + 1).into(),
            timestamp: minute.map(|m| Utc.with_ymd_and_hms(2023, 7, 1, 10, m, 0).unwrap()),
            manifest_index: i,
            cached_description: None,
        }
    }

    fn manifest(minutes: &[Option<u32>]) -> CollectionManifest {
        CollectionManifest {
            collection_id: "c".into(),
            title: String::new(),
            photos: minutes.iter().enumerate().map(|(i, m)| photo(i, *m)).collect(),
            portrait_photo: None,
            locale: "en".into(),
        }
    }

    fn ids(photos: &[PhotoRecord]) -> Vec<&str> {
        photos.iter().map(|p| p.photo_id.as_str()).collect()
    }

    #[test]
    fn ordering_by_timestamp() {
        let m = manifest(&[Some(30), Some(10), Some(20)]);
        assert_eq!(ids(&order_photos(&m)), ["p2", "p3", "p1"]);
    }

    #[test]
    fn ordering_without_timestamps_keeps_manifest_order() {
        let m = manifest(&[None, None, None]);
        assert_eq!(ids(&order_photos(&m)), ["p1", "p2", "p3"]);
    }

    #[test]
    fn ordering_is_stable_on_equal_timestamps() {
        let m = manifest(&[Some(5), Some(5), Some(1), Some(5)]);
        assert_eq!(ids(&order_photos(&m)), ["p3", "p1", "p2", "p4"]);
    }

    /// Scorer answering from a fixed score list keyed by the left photo.
    struct Fixed(Vec<f64>);
    impl PairScorer for Fixed {
        fn score_pair(&self, a: &PhotoRecord, _: &PhotoRecord) -> Result<f64, GatewayError> {
            Ok(self.0[a.manifest_index])
        }
    }

    #[test]
    fn segmentation_cuts_below_threshold() {
        let photos = order_photos(&manifest(&[Some(1), Some(2), Some(3), Some(4)]));
        let seg = segment_scenes(&photos, &Fixed(vec![0.9, 0.3, 0.7]), 0.5, Exec::Parallel).unwrap();
        assert_eq!(seg.boundaries, BTreeSet::from([1]));
        assert_eq!(seg.scene_ranges(), vec![0..2, 2..4]);
    }

    #[test]
    fn segmentation_without_low_scores_is_one_scene() {
        let photos = order_photos(&manifest(&[Some(1), Some(2), Some(3)]));
        let seg = segment_scenes(&photos, &Fixed(vec![0.5, 0.99]), 0.5, Exec::Sequential).unwrap();
        assert!(seg.boundaries.is_empty());
        assert_eq!(seg.scene_count(), 1);
    }

    #[test]
    fn single_photo_has_no_pairs() {
        let photos = order_photos(&manifest(&[None]));
        let seg = segment_scenes(&photos, &Fixed(vec![]), 0.5, Exec::Parallel).unwrap();
        assert!(seg.pair_scores.is_empty());
        assert_eq!(seg.scene_ranges(), vec![0..1]);
    }

    #[test]
    fn threshold_out_of_range_is_rejected() {
        let photos = order_photos(&manifest(&[None, None]));
        for t in [0.0, -0.1, 1.01, f64::NAN] {
            assert!(matches!(segment_scenes(&photos, &Fixed(vec![0.4]), t, Exec::Sequential), Err(BuildError::Threshold(_))));
        }
    }

    #[test]
    fn parallel_scoring_restores_pair_order() {
        struct Slow(Mutex<Vec<usize>>);
        impl PairScorer for Slow {
            fn score_pair(&self, a: &PhotoRecord, _: &PhotoRecord) -> Result<f64, GatewayError> {
                self.0.lock().unwrap().push(a.manifest_index);
                Ok(a.manifest_index as f64 / 100.0)
            }
        }
        let photos = order_photos(&manifest(&vec![None; 50]));
        let seg = segment_scenes(&photos, &Slow(Mutex::new(vec![])), 0.5, Exec::Parallel).unwrap();
        let expected: Vec<f64> = (0..49).map(|i| i as f64 / 100.0).collect();
        assert_eq!(seg.pair_scores, expected);
    }

    proptest! {
        #[test]
        fn raising_threshold_never_reduces_scenes(
            scores in proptest::collection::vec(0.0f64..=1.0, 0..40),
            t1 in 0.01f64..=1.0,
            t2 in 0.01f64..=1.0,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = SegmentationResult::from_scores(scores.clone(), lo);
            let b = SegmentationResult::from_scores(scores, hi);
            prop_assert!(a.scene_count() <= b.scene_count());
        }

        #[test]
        fn ranges_partition_the_photos(scores in proptest::collection::vec(0.0f64..=1.0, 0..40)) {
            let seg = SegmentationResult::from_scores(scores.clone(), 0.5);
            let ranges = seg.scene_ranges();
            prop_assert_eq!(ranges.len(), seg.scene_count());
            prop_assert_eq!(ranges.first().unwrap().start, 0);
            prop_assert_eq!(ranges.last().unwrap().end, scores.len() + 1);
            for w in ranges.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
            }
        }
    }
}
