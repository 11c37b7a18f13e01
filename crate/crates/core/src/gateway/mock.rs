//! Deterministic, fixture-driven backend.
//!
//! Answers are a pure function of the request and the annotation file, so a
//! replayed session produces byte-identical output. Responses are phrased
//! the way a real model would answer (prose around fenced JSON) so the
//! gateway's parsers are exercised on every call.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendError, ModelBackend, ModelRequest, Repair, RequestSubject, MAX_SELECTED_PHOTOS};
use crate::domain::{DetailCategory, SceneActivity, TreeIoError};
use crate::text;

/// File name of the annotations, looked up next to the collection manifest.
pub const MOCK_ANNOTATIONS_FILE: &str = "mock_annotations.json";

const SAME_SCENE_SCORE: f64 = 0.9;
const CROSS_SCENE_SCORE: f64 = 0.2;
const UNKNOWN_PAIR_SCORE: f64 = 0.8;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockPhoto {
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockPair {
    pub a: String,
    pub b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    /// Verbatim model output, for exercising the parser.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockDetail {
    pub category: DetailCategory,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScene {
    pub photo_ids: Vec<String>,
    pub activity: SceneActivity,
    /// Returned instead of the activity sentence when asked to shorten it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shortened_sentence: Option<String>,
    #[serde(default)]
    pub details: Vec<MockDetail>,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockReply {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_id: Option<u32>,
    pub keyword: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockSelection {
    pub keyword: String,
    pub photo_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockAnnotations {
    pub photos: BTreeMap<String, MockPhoto>,
    pub pair_scores: Vec<MockPair>,
    pub scenes: Vec<MockScene>,
    pub replies: Vec<MockReply>,
    pub selections: Vec<MockSelection>,
    /// Drop the last storyline sentence, to exercise the count check.
    pub storyline_drop_last: bool,
    pub default_pair_score: Option<f64>,
    /// Artificial per-call latency.
    pub latency_ms: u64,
    /// Chat replies to inputs containing one of these (case-insensitive)
    /// are rejected, to exercise error handling.
    pub failing_inputs: Vec<String>,
}

impl MockAnnotations {
    pub fn load(path: &Path) -> Result<Self, TreeIoError> {
        let text = fs::read_to_string(path).map_err(|source| TreeIoError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|e| TreeIoError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    fn fails_on(&self, input: &str) -> bool {
        let input = input.to_lowercase();
        self.failing_inputs.iter().any(|k| input.contains(&k.to_lowercase()))
    }

    fn scene_of(&self, photo_id: &str) -> Option<usize> {
        self.scenes.iter().position(|s| s.photo_ids.iter().any(|p| p == photo_id))
    }

    fn scene_for(&self, photo_ids: &[String]) -> Option<&MockScene> {
        self.scenes
            .iter()
            .find(|s| s.photo_ids == photo_ids)
            .or_else(|| photo_ids.first().and_then(|p| self.scene_of(p)).map(|i| &self.scenes[i]))
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    annotations: MockAnnotations,
}

impl MockBackend {
    pub fn new(annotations: MockAnnotations) -> Self {
        MockBackend { annotations }
    }

    /// Loads the annotation file sitting next to `manifest_path`; a missing
    /// file yields an empty fixture.
    pub fn for_manifest(manifest_path: &Path) -> Result<Self, TreeIoError> {
        let path = manifest_path.parent().unwrap_or(Path::new(".")).join(MOCK_ANNOTATIONS_FILE);
        if !path.exists() {
            return Ok(MockBackend::default());
        }
        Ok(MockBackend::new(MockAnnotations::load(&path)?))
    }

    pub fn annotations(&self) -> &MockAnnotations {
        &self.annotations
    }

    fn describe(&self, photo_id: &str) -> String {
        let photo = self.annotations.photos.get(photo_id);
        match photo.and_then(|p| p.description.clone()) {
            Some(d) => d,
            None => match photo.filter(|p| !p.tags.is_empty()) {
                Some(p) => format!("A photo showing {}.", p.tags.join(", ").replace('_', " ")),
                None => format!("A photo from the collection ({photo_id})."),
            },
        }
    }

    fn score(&self, req: &ModelRequest, a: &str, b: &str) -> String {
        let ann = &self.annotations;
        let explicit = ann
            .pair_scores
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a));
        if let Some(pair) = explicit {
            if let Some(raw) = &pair.raw {
                return raw.clone();
            }
            if let Some(score) = pair.score {
                return format!("similarity: {score} based on the people, place and action shown.");
            }
        }
        if let [pa, pb] = req.image_refs.as_slice() {
            if pa == pb || matches!((fs::read(pa), fs::read(pb)), (Ok(x), Ok(y)) if x == y) {
                return "similarity: 1.0, these are the same image.".to_string();
            }
        }
        let score = match (ann.scene_of(a), ann.scene_of(b)) {
            (Some(x), Some(y)) if x == y => SAME_SCENE_SCORE,
            (Some(_), Some(_)) => CROSS_SCENE_SCORE,
            _ => ann.default_pair_score.unwrap_or(UNKNOWN_PAIR_SCORE),
        };
        format!("similarity: {score}")
    }

    fn extract(&self, req: &ModelRequest, photo_ids: &[String]) -> String {
        let payload = match self.annotations.scene_for(photo_ids) {
            Some(scene) => {
                let mut activity = scene.activity.clone();
                if req.repair == Some(Repair::ShortenActivity) {
                    if let Some(short) = &scene.shortened_sentence {
                        activity.sentence = short.clone();
                    }
                }
                json!({
                    "activity": {
                        "sentence": activity.sentence,
                        "aspects": activity.aspects,
                        "reasons": activity.reasons,
                    },
                    "details": scene.details,
                })
            }
            None => {
                let descs: Vec<String> = photo_ids.iter().map(|p| self.describe(p)).collect();
                json!({
                    "activity": {"sentence": format!("A moment captured in {} photo(s).", photo_ids.len()), "reasons": []},
                    "details": descs.iter().map(|d| json!({"category": "others", "description": d})).collect::<Vec<_>>(),
                })
            }
        };
        fenced(&payload)
    }

    fn storyline(&self, scenes: &[super::StorylineScene]) -> String {
        let mut out: Vec<String> = scenes
            .iter()
            .map(|s| match self.annotations.scenes.iter().find(|m| m.photo_ids == s.photo_ids) {
                Some(m) => m.summary.clone(),
                None => s.activity_sentence.clone(),
            })
            .collect();
        if self.annotations.storyline_drop_last {
            out.pop();
        }
        fenced(&json!({ "storyline": out }))
    }

    fn reply(&self, scene_id: Option<u32>, turn_index: usize, user_input: &str, photo_ids: &[String]) -> String {
        if user_input.trim().is_empty() {
            return String::new();
        }
        let toks = text::tokens(user_input);
        let keyed = self.annotations.replies.iter().find(|r| {
            (r.scene_id.is_none() || r.scene_id == scene_id) && text::contains_phrase(&toks, &r.keyword)
        });
        if let Some(r) = keyed {
            return r.text.clone();
        }
        match scene_id {
            Some(s) => format!("[scene {s}, turn {turn_index}] I see what you mean."),
            None => format!("[photos {}; turn {turn_index}] Here is what I notice in these photos.", photo_ids.join(", ")),
        }
    }

    fn select(&self, user_input: &str, candidates: &[String]) -> String {
        let toks = text::tokens(user_input);
        let by_keyword = self
            .annotations
            .selections
            .iter()
            .find(|s| text::contains_phrase(&toks, &s.keyword))
            .map(|s| s.photo_ids.clone());
        let ids = by_keyword.unwrap_or_else(|| {
            let words = text::content_tokens(user_input);
            let tagged: Vec<String> = candidates
                .iter()
                .filter(|id| {
                    self.annotations.photos.get(*id).is_some_and(|p| {
                        p.tags.iter().any(|t| text::tokens(t).iter().any(|w| words.contains(w)))
                    })
                })
                .take(MAX_SELECTED_PHOTOS)
                .cloned()
                .collect();
            if tagged.is_empty() {
                candidates.iter().take(MAX_SELECTED_PHOTOS).cloned().collect()
            } else {
                tagged
            }
        });
        fenced(&json!({ "photo_ids": ids }))
    }
}

fn fenced(v: &serde_json::Value) -> String {
    format!("Here is the result.\n```json\n{}\n```", serde_json::to_string(v).unwrap())
}

impl ModelBackend for MockBackend {
    fn model_id(&self) -> &str {
        "mock"
    }

    fn complete(&self, req: &ModelRequest) -> Result<String, BackendError> {
        if self.annotations.latency_ms > 0 {
            std::thread::sleep(Duration::from_millis(self.annotations.latency_ms));
        }
        Ok(match &req.subject {
            RequestSubject::Photo { photo_id } => self.describe(photo_id),
            RequestSubject::Pair { a, b } => self.score(req, a, b),
            RequestSubject::Scene { photo_ids, .. } => self.extract(req, photo_ids),
            RequestSubject::Storyline { scenes } => self.storyline(scenes),
            RequestSubject::Reply { user_input, .. } if self.annotations.fails_on(user_input) => {
                return Err(BackendError::Rejected(format!("mock refuses {user_input:?}")));
            }
            RequestSubject::Reply { scene_id, turn_index, user_input, photo_ids } => {
                self.reply(*scene_id, *turn_index, user_input, photo_ids)
            }
            RequestSubject::Select { user_input, candidates } => self.select(user_input, candidates),
        })
    }
}
