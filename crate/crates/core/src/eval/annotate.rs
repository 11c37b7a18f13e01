//! Bookkeeping for manual accuracy labels on generated trees.
//!
//! Statements are keyed `storyline:{scene}`, `activity:{scene}` and
//! `detail:{detail_id}`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::domain::MemoryTree;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "label", rename_all = "snake_case")]
pub enum StatementLabel {
    Correct,
    Inaccurate { reason: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationSet {
    pub statement_labels: BTreeMap<String, StatementLabel>,
    /// Cut indices per labelled collection (same convention as
    /// [`super::tree_cut_points`]).
    pub segmentation_points: BTreeMap<String, BTreeSet<usize>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
    /// `correct / total`; 1.0 when there is nothing to label.
    pub accuracy: f64,
}

impl Tally {
    fn new(correct: usize, total: usize) -> Self {
        let accuracy = if total == 0 { 1.0 } else { correct as f64 / total as f64 };
        Tally { correct, total, accuracy }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub storyline: Tally,
    pub activity: Tally,
    pub detail: Tally,
    /// Inaccuracy reasons and how often each occurred.
    pub error_categories: BTreeMap<String, usize>,
}

pub fn statement_keys(tree: &MemoryTree) -> (Vec<String>, Vec<String>, Vec<String>) {
    let storyline = tree.storyline.iter().map(|e| format!("storyline:{}", e.scene_id)).collect();
    let activity = tree.scenes.iter().map(|s| format!("activity:{}", s.scene_id)).collect();
    let detail = tree.scenes.iter().flat_map(|s| &s.details).map(|d| format!("detail:{}", d.detail_id)).collect();
    (storyline, activity, detail)
}

/// Accuracy per statement level. Every statement of `tree` must be
/// labelled and every label must refer to a statement of `tree`.
pub fn score_annotations(tree: &MemoryTree, set: &AnnotationSet) -> Result<AccuracyReport, EvalError> {
    let (storyline, activity, detail) = statement_keys(tree);
    let all: BTreeSet<&String> = storyline.iter().chain(&activity).chain(&detail).collect();
    let uncovered: Vec<String> = all.iter().filter(|k| !set.statement_labels.contains_key(**k)).map(|k| k.to_string()).collect();
    if !uncovered.is_empty() {
        return Err(EvalError::Unlabelled(uncovered));
    }
    let unknown: Vec<String> = set.statement_labels.keys().filter(|k| !all.contains(k)).cloned().collect();
    if !unknown.is_empty() {
        return Err(EvalError::UnknownStatements(unknown));
    }
    let tally = |keys: &[String]| {
        let correct = keys.iter().filter(|k| set.statement_labels[*k] == StatementLabel::Correct).count();
        Tally::new(correct, keys.len())
    };
    let mut error_categories = BTreeMap::new();
    for label in set.statement_labels.values() {
        if let StatementLabel::Inaccurate { reason } = label {
            *error_categories.entry(reason.clone()).or_insert(0) += 1;
        }
    }
    Ok(AccuracyReport { storyline: tally(&storyline), activity: tally(&activity), detail: tally(&detail), error_categories })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{random_collection, SynthOptions};

    fn tree() -> MemoryTree {
        let opts = SynthOptions { scenes: (2, 2), details_per_scene: (2, 2), ..Default::default() };
        random_collection(1, &opts).tree
    }

    fn all_correct(t: &MemoryTree) -> AnnotationSet {
        let (a, b, c) = statement_keys(t);
        AnnotationSet {
            statement_labels: a.into_iter().chain(b).chain(c).map(|k| (k, StatementLabel::Correct)).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn all_correct_is_perfect() {
        let t = tree();
        let r = score_annotations(&t, &all_correct(&t)).unwrap();
        assert_eq!((r.storyline.accuracy, r.activity.accuracy, r.detail.accuracy), (1.0, 1.0, 1.0));
    }

    #[test]
    fn one_of_four_details_wrong() {
        let t = tree();
        let mut set = all_correct(&t);
        set.statement_labels.insert("detail:s2-d1".into(), StatementLabel::Inaccurate { reason: "misidentified object".into() });
        let r = score_annotations(&t, &set).unwrap();
        assert_eq!(r.detail.accuracy, 0.75);
        assert_eq!(r.error_categories["misidentified object"], 1);
    }

    #[test]
    fn missing_and_unknown_labels_are_reported() {
        let t = tree();
        let mut set = all_correct(&t);
        set.statement_labels.remove("activity:1");
        assert!(matches!(score_annotations(&t, &set), Err(EvalError::Unlabelled(k)) if k == ["activity:1"]));
        let mut set = all_correct(&t);
        set.statement_labels.insert("detail:s9-d1".into(), StatementLabel::Correct);
        assert!(matches!(score_annotations(&t, &set), Err(EvalError::UnknownStatements(_))));
    }

    #[test]
    fn label_json_shape() {
        let json = r#"{"statement_labels": {"detail:s1-d1": {"label": "inaccurate", "reason": "wrong colour"}}}"#;
        let set: AnnotationSet = serde_json::from_str(json).unwrap();
        assert_eq!(set.statement_labels["detail:s1-d1"], StatementLabel::Inaccurate { reason: "wrong colour".into() });
    }
}
