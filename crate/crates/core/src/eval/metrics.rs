use std::collections::BTreeSet;

use super::EvalError;
use crate::domain::{chronological_order, CollectionManifest, EngineKind, MemoryTree, Speaker, Transcript};
use crate::text;

/// |a ∩ b| / |a ∪ b|, with two empty sets in perfect agreement.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Fraction of the tree's scenes discussed in `transcript`.
///
/// Reviver: a scene counts once it was selected for a reply. Baseline: a
/// scene counts once any of its photos was selected, in any turn. Error
/// turns and the opening turn are skipped; any other bot turn lacking the
/// engine's annotation is an error.
pub fn scene_coverage(transcript: &Transcript, tree: &MemoryTree) -> Result<f64, EvalError> {
    if tree.scenes.is_empty() {
        return Ok(0.0);
    }
    let mut discussed = BTreeSet::new();
    let mut seen_user = false;
    for turn in &transcript.turns {
        if turn.speaker == Speaker::User {
            seen_user = true;
            continue;
        }
        if !seen_user || turn.is_error() {
            continue;
        }
        let a = &turn.annotations;
        match transcript.engine {
            EngineKind::Reviver => {
                let s = a.selected_scene.ok_or(EvalError::MissingAnnotation {
                    turn_index: turn.turn_index,
                    field: "selected_scene",
                })?;
                discussed.insert(s);
            }
            EngineKind::Baseline => {
                let photos = a.selected_photos.as_ref().ok_or(EvalError::MissingAnnotation {
                    turn_index: turn.turn_index,
                    field: "selected_photos",
                })?;
                discussed.extend(photos.iter().filter_map(|p| tree.scene_of_photo(p)));
            }
        }
    }
    let known = discussed.iter().filter(|s| tree.scene(**s).is_some()).count();
    Ok(known as f64 / tree.scenes.len() as f64)
}

/// Word count of the post narrative over the pre narrative.
pub fn memory_ratio(pre: &str, post: &str, locale: &str) -> Result<f64, EvalError> {
    let pre_words = text::word_count(pre, locale);
    if pre_words == 0 {
        return Err(EvalError::EmptyNarrative);
    }
    Ok(text::word_count(post, locale) as f64 / pre_words as f64)
}

/// Cut indices of `tree`: `i` means a scene boundary after the `i`-th
/// photo (0-based) in chronological order.
pub fn tree_cut_points(tree: &MemoryTree, manifest: &CollectionManifest) -> BTreeSet<usize> {
    let ordered = chronological_order(&manifest.photos);
    ordered
        .windows(2)
        .enumerate()
        .filter(|(_, w)| tree.scene_of_photo(&w[0].photo_id) != tree.scene_of_photo(&w[1].photo_id))
        .map(|(i, _)| i)
        .collect()
}
