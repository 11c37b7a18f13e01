//! Tree-guided proactive dialogue.
//!
//! Each user turn is classified, a scene is selected, the model writes a
//! free-form reply grounded in that scene's photos and the engine appends
//! guidance chosen from the memory tree.

pub mod classify;
pub mod strategy;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use classify::{classify_input, InputClass, InputClassifier, RuleClassifier};
pub use strategy::{compose_guidance, select_scene, Guidance, Notice, SceneSelection, SelectionRule};

use crate::domain::{
    validate_tree, Annotations, ChatTurn, CollectionManifest, GuidanceKind, MemoryTree, Phase, SessionState,
    ValidationReport,
};
use crate::gateway::Gateway;
use crate::text;

/// Keyword lists and thresholds of the rule-based dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DialogueConfig {
    pub locale: String,
    pub acceptance_keywords: Vec<String>,
    pub rejection_keywords: Vec<String>,
    pub next_scene_phrases: Vec<String>,
    pub switch_prefixes: Vec<String>,
    pub interrogatives: Vec<String>,
    pub question_suffixes: Vec<String>,
    /// Interrogatives count anywhere in the input, not just at the start.
    pub interrogative_anywhere: bool,
    /// Fraction of a detail's content tokens that must appear in one turn
    /// for the detail to count as already mentioned.
    pub mention_threshold: f64,
    pub separator: String,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for DialogueConfig {
    fn default() -> Self {
        DialogueConfig {
            locale: "en".to_string(),
            acceptance_keywords: strings(&[
                "okay", "ok", "go on", "yes", "sure", "alright", "all right", "let's go", "sounds good", "yeah",
            ]),
            rejection_keywords: strings(&["no", "not yet", "nope", "wait", "later"]),
            next_scene_phrases: strings(&["next scene"]),
            switch_prefixes: strings(&["let's talk about", "lets talk about", "let us talk about"]),
            interrogatives: strings(&[
                "what", "who", "where", "when", "why", "how", "which", "whose", "is", "are", "was", "were", "do",
                "does", "did", "can", "could", "would", "will", "should",
            ]),
            question_suffixes: Vec::new(),
            interrogative_anywhere: false,
            mention_threshold: 0.6,
            separator: "\n\n".to_string(),
        }
    }
}

impl DialogueConfig {
    /// English defaults, or the Chinese keyword set for CJK locales.
    pub fn for_locale(locale: &str) -> Self {
        if !text::is_cjk_locale(locale) {
            return DialogueConfig { locale: locale.to_string(), ..Default::default() };
        }
        DialogueConfig {
            locale: locale.to_string(),
            acceptance_keywords: strings(&["好", "好的", "继续", "可以"]),
            rejection_keywords: strings(&["不", "不要", "等等"]),
            next_scene_phrases: strings(&["下一个场景"]),
            switch_prefixes: strings(&["我们聊聊", "聊聊"]),
            interrogatives: strings(&["谁", "什么", "哪", "怎么", "为什么", "几"]),
            question_suffixes: strings(&["吗", "呢"]),
            interrogative_anywhere: true,
            ..Default::default()
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DialogueError {
    #[error("memory tree is invalid:\n{0}")]
    InvalidTree(ValidationReport),
    #[error("session {0} has concluded")]
    Concluded(String),
    #[error("session belongs to collection {found:?}, engine serves {expected:?}")]
    WrongCollection { found: String, expected: String },
}

const APOLOGY: &str = "Sorry, I could not come up with a reply just now. Please try again.";

/// The proactive chat engine over one memory tree.
#[derive(Clone)]
pub struct ReviverEngine {
    tree: Arc<MemoryTree>,
    gateway: Arc<Gateway>,
    photo_paths: BTreeMap<String, PathBuf>,
    portrait: Option<PathBuf>,
    config: DialogueConfig,
    classifier: Arc<dyn InputClassifier>,
}

impl std::fmt::Debug for ReviverEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReviverEngine")
            .field("collection_id", &self.tree.collection_id)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl ReviverEngine {
    pub fn new(tree: Arc<MemoryTree>, gateway: Arc<Gateway>, config: DialogueConfig) -> Result<Self, DialogueError> {
        let report = validate_tree(&tree, None);
        if !report.is_valid() {
            return Err(DialogueError::InvalidTree(report));
        }
        let classifier = Arc::new(RuleClassifier::new(config.clone()));
        Ok(ReviverEngine { tree, gateway, photo_paths: BTreeMap::new(), portrait: None, config, classifier })
    }

    /// Resolves photo ids to files and picks up the portrait. Without a
    /// manifest photo ids are used as paths.
    pub fn with_manifest(mut self, manifest: &CollectionManifest) -> Self {
        self.photo_paths = manifest.photos.iter().map(|p| (p.photo_id.clone(), p.source_path.clone())).collect();
        self.portrait = manifest.portrait_photo.clone();
        self
    }

    pub fn with_classifier(mut self, classifier: Arc<dyn InputClassifier>) -> Self {
        self.classifier = classifier;
        self
    }

    pub fn tree(&self) -> &MemoryTree {
        &self.tree
    }

    pub fn config(&self) -> &DialogueConfig {
        &self.config
    }

    /// New session whose first bot turn lays out the storyline and proposes
    /// the first scene.
    pub fn start_session(&self, session_id: impl Into<String>) -> SessionState {
        let mut state = SessionState::new(session_id, self.tree.collection_id.clone());
        let first = self.tree.storyline.first().map(|e| e.scene_id).unwrap_or(1);
        state.current_scene = first;
        state.pending_suggestion = Some(first);
        let annotations = Annotations {
            guidance_kind: Some(GuidanceKind::Storyline),
            suggested_scene: Some(first),
            ..Default::default()
        };
        state.history.push(ChatTurn::bot(0, strategy::opening_text(&self.tree), annotations));
        state
    }

    /// Processes one user message and returns the bot turn (also appended
    /// to the history). Model failures produce an apologetic turn carrying
    /// the error and leave everything but the history untouched.
    pub fn reply(&self, state: &mut SessionState, user_text: &str) -> Result<ChatTurn, DialogueError> {
        if state.collection_id != self.tree.collection_id {
            return Err(DialogueError::WrongCollection {
                found: state.collection_id.clone(),
                expected: self.tree.collection_id.clone(),
            });
        }
        if state.phase == Phase::Concluded {
            return Err(DialogueError::Concluded(state.session_id.clone()));
        }
        let input = self.classifier.classify(user_text, state.pending_suggestion.is_some());
        let selection = select_scene(state, &self.tree, &input);

        let user_index = state.next_turn_index();
        state.history.push(ChatTurn::user(user_index, user_text, Some(input.kind)));

        let photos = self.scene_photos(selection.scene_id);
        let raw = match self.gateway.generate_raw_reply(
            user_text,
            &state.history[..user_index],
            Some(selection.scene_id),
            user_index,
            &photos,
        ) {
            Ok(raw) => raw,
            Err(e) => {
                tracing::warn!(session = %state.session_id, error = %e, "reply generation failed");
                let annotations = Annotations {
                    classified_as: Some(input.kind),
                    gateway_error: Some(e.to_string()),
                    ..Default::default()
                };
                let turn = ChatTurn::bot(user_index + 1, APOLOGY, annotations);
                state.history.push(turn.clone());
                return Ok(turn);
            }
        };

        state.current_scene = selection.scene_id;
        state.pending_suggestion = None;
        if state.phase == Phase::Opened {
            state.phase = Phase::Exploring;
        }
        let guidance = compose_guidance(state, &self.tree, selection.scene_id, &raw, &self.config);

        let notice = selection.notice.as_ref().map(strategy::notice_text);
        let text = [Some(raw), notice, Some(guidance.text.clone())]
            .into_iter()
            .flatten()
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(&self.config.separator);
        let annotations = Annotations {
            classified_as: Some(input.kind),
            selected_scene: Some(selection.scene_id),
            guidance_kind: Some(guidance.kind),
            emitted_detail_id: guidance.emitted_detail_id,
            covered_by_reply: guidance.covered_by_reply,
            suggested_scene: guidance.suggested_scene,
            ..Default::default()
        };
        let turn = ChatTurn::bot(user_index + 1, text, annotations);
        state.history.push(turn.clone());
        Ok(turn)
    }

    fn scene_photos(&self, scene_id: u32) -> Vec<(String, PathBuf)> {
        let mut out: Vec<(String, PathBuf)> = self
            .tree
            .scene(scene_id)
            .map(|s| s.photo_ids.as_slice())
            .unwrap_or_default()
            .iter()
            .map(|id| (id.clone(), self.photo_paths.get(id).cloned().unwrap_or_else(|| PathBuf::from(id))))
            .collect();
        if let Some(p) = &self.portrait {
            out.push(("portrait".to_string(), p.clone()));
        }
        out
    }
}

#[cfg(test)]
mod tests;
