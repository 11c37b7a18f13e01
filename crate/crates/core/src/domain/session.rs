use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::MemoryTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Bot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Acceptance,
    Rejection,
    NextSceneCmd,
    SwitchCmd,
    Question,
    Statement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceKind {
    Storyline,
    ActivityIntro,
    Detail,
    SceneSuggestion,
    FinalSummary,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Reviver,
    Baseline,
}

impl std::str::FromStr for EngineKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reviver" => Ok(EngineKind::Reviver),
            "baseline" => Ok(EngineKind::Baseline),
            other => Err(format!("unknown engine {other:?} (expected reviver|baseline)")),
        }
    }
}

/// Per-turn engine instrumentation; the raw material of every metric.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotations {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classified_as: Option<InputKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_scene: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance_kind: Option<GuidanceKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emitted_detail_id: Option<String>,
    /// Details skipped because the raw reply already covered them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub covered_by_reply: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggested_scene: Option<u32>,
    /// Photos handed to the reply model (baseline engine).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_photos: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gateway_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub turn_index: usize,
    pub speaker: Speaker,
    pub text: String,
    #[serde(default)]
    pub annotations: Annotations,
}

impl ChatTurn {
    pub fn user(turn_index: usize, text: impl Into<String>, kind: Option<InputKind>) -> Self {
        ChatTurn {
            turn_index,
            speaker: Speaker::User,
            text: text.into(),
            annotations: Annotations { classified_as: kind, ..Default::default() },
        }
    }

    pub fn bot(turn_index: usize, text: impl Into<String>, annotations: Annotations) -> Self {
        ChatTurn { turn_index, speaker: Speaker::Bot, text: text.into(), annotations }
    }

    pub fn is_error(&self) -> bool {
        self.annotations.gateway_error.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Opened,
    Exploring,
    Concluded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub collection_id: String,
    pub current_scene: u32,
    pub discussed_details: BTreeMap<u32, BTreeSet<String>>,
    pub visited_scenes: BTreeSet<u32>,
    pub pending_suggestion: Option<u32>,
    pub phase: Phase,
    pub history: Vec<ChatTurn>,
}

impl SessionState {
    pub fn new(session_id: impl Into<String>, collection_id: impl Into<String>) -> Self {
        SessionState {
            session_id: session_id.into(),
            collection_id: collection_id.into(),
            current_scene: 1,
            discussed_details: BTreeMap::new(),
            visited_scenes: BTreeSet::new(),
            pending_suggestion: None,
            phase: Phase::Opened,
            history: Vec::new(),
        }
    }

    pub fn is_discussed(&self, scene_id: u32, detail_id: &str) -> bool {
        self.discussed_details.get(&scene_id).is_some_and(|s| s.contains(detail_id))
    }

    pub fn mark_discussed(&mut self, scene_id: u32, detail_id: &str) {
        self.discussed_details.entry(scene_id).or_default().insert(detail_id.to_string());
    }

    pub fn next_turn_index(&self) -> usize {
        self.history.len()
    }

    pub fn last_user_turn(&self) -> Option<&ChatTurn> {
        self.history.iter().rev().find(|t| t.speaker == Speaker::User)
    }

    /// Checks the session invariants against `tree`; returns one message per
    /// violated invariant.
    pub fn check(&self, tree: &MemoryTree) -> Vec<String> {
        let mut out = Vec::new();
        if tree.scene(self.current_scene).is_none() {
            out.push(format!("current_scene {} not in tree", self.current_scene));
        }
        if let Some(p) = self.pending_suggestion {
            if self.visited_scenes.contains(&p) {
                out.push(format!("pending_suggestion {p} already visited"));
            }
            if tree.scene(p).is_none() {
                out.push(format!("pending_suggestion {p} not in tree"));
            }
        }
        for (scene_id, ids) in &self.discussed_details {
            match tree.scene(*scene_id) {
                None => out.push(format!("discussed_details refers to unknown scene {scene_id}")),
                Some(scene) => {
                    for id in ids {
                        if !scene.details.iter().any(|d| &d.detail_id == id) {
                            out.push(format!("detail {id} is not part of scene {scene_id}"));
                        }
                    }
                }
            }
        }
        if self.phase == Phase::Concluded && tree.scene_ids().any(|s| !self.visited_scenes.contains(&s)) {
            out.push("phase concluded with unvisited scenes".to_string());
        }
        out
    }
}

/// Ordered chat turns of one session. Deliberately free of session ids and
/// wall-clock times so identical runs serialise to identical bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub collection_id: String,
    pub engine: EngineKind,
    pub turns: Vec<ChatTurn>,
}
