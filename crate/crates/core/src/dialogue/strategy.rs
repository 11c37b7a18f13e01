//! The proactive strategy: scene selection rules and the guidance each turn
//! appends after the raw reply.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{DialogueConfig, InputClass};
use crate::domain::{GuidanceKind, InputKind, MemoryTree, Phase, Scene, SceneDetail, SessionState};
use crate::text;

/// Which scene-selection rule fired for a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    AcceptedSuggestion,
    NextScene,
    Switch,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Notice {
    /// "Next scene" issued on the last scene.
    NoLaterScene,
    /// Switch keyword matched no scene.
    NoMatch { keyword: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneSelection {
    pub scene_id: u32,
    pub rule: SelectionRule,
    pub notice: Option<Notice>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guidance {
    pub kind: GuidanceKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emitted_detail_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggested_scene: Option<u32>,
    /// Details skipped this turn because the raw reply already covered them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub covered_by_reply: Vec<String>,
}

impl Guidance {
    fn new(kind: GuidanceKind, text: String) -> Self {
        Guidance { kind, text, emitted_detail_id: None, suggested_scene: None, covered_by_reply: Vec::new() }
    }

    pub fn none() -> Self {
        Guidance::new(GuidanceKind::None, String::new())
    }
}

/// Decides the scene for this turn: an accepted suggestion moves to the
/// suggested scene, "next scene" advances (clamped at the last scene), a
/// switch command moves to the best keyword match, anything else stays.
pub fn select_scene(state: &SessionState, tree: &MemoryTree, input: &InputClass) -> SceneSelection {
    let stay = |notice| SceneSelection { scene_id: state.current_scene, rule: SelectionRule::Unchanged, notice };
    match input.kind {
        InputKind::Acceptance => match state.pending_suggestion {
            Some(s) => SceneSelection { scene_id: s, rule: SelectionRule::AcceptedSuggestion, notice: None },
            None => stay(None),
        },
        InputKind::NextSceneCmd => {
            let next = state.current_scene + 1;
            if tree.scene(next).is_some() {
                SceneSelection { scene_id: next, rule: SelectionRule::NextScene, notice: None }
            } else {
                SceneSelection { scene_id: state.current_scene, rule: SelectionRule::NextScene, notice: Some(Notice::NoLaterScene) }
            }
        }
        InputKind::SwitchCmd => {
            let keyword = input.keyword.clone().unwrap_or_default();
            match match_scene(tree, &keyword) {
                Some(s) => SceneSelection { scene_id: s, rule: SelectionRule::Switch, notice: None },
                None => stay(Some(Notice::NoMatch { keyword })),
            }
        }
        InputKind::Rejection | InputKind::Question | InputKind::Statement => stay(None),
    }
}

/// Scene whose text shares the most content tokens with `keyword`; ties go
/// to the earliest scene, zero overlap matches nothing.
pub fn match_scene(tree: &MemoryTree, keyword: &str) -> Option<u32> {
    let wanted = text::content_tokens(keyword);
    let mut best: Option<(usize, u32)> = None;
    for scene in &tree.scenes {
        let have = text::token_set(&scene_text(scene));
        let overlap = wanted.iter().filter(|w| have.contains(*w)).count();
        if overlap > 0 && best.is_none_or(|(b, _)| overlap > b) {
            best = Some((overlap, scene.scene_id));
        }
    }
    best.map(|(_, s)| s)
}

fn scene_text(scene: &Scene) -> String {
    let a = &scene.activity;
    let mut parts: Vec<&str> = vec![&a.sentence, &scene.summary_sentence];
    parts.extend(a.reasons.iter().map(String::as_str));
    parts.extend([&a.aspects.who, &a.aspects.what, &a.aspects.when, &a.aspects.r#where].into_iter().flatten().map(String::as_str));
    parts.extend(scene.details.iter().map(|d| d.description.as_str()));
    parts.join(" ")
}

/// True when `detail` already came up: enough of its content tokens appear
/// within a single text.
pub fn is_mentioned_in(detail: &SceneDetail, text_: &str, threshold: f64) -> bool {
    let needle = text::content_tokens(&detail.description);
    !needle.is_empty() && text::coverage_fraction(&needle, &text::token_set(text_)) >= threshold
}

fn mentioned_in_history(state: &SessionState, detail: &SceneDetail, threshold: f64) -> bool {
    let needle = text::content_tokens(&detail.description);
    if needle.is_empty() {
        return false;
    }
    state
        .history
        .iter()
        .any(|t| text::coverage_fraction(&needle, &text::token_set(&t.text)) >= threshold)
}

/// First detail of `scene_id` (in tree order) that has neither been
/// emitted nor come up in any earlier turn.
pub fn next_undiscussed_detail<'t>(
    state: &SessionState,
    tree: &'t MemoryTree,
    scene_id: u32,
    config: &DialogueConfig,
) -> Option<&'t SceneDetail> {
    tree.scene(scene_id)?.details.iter().find(|d| {
        !state.is_discussed(scene_id, &d.detail_id) && !mentioned_in_history(state, d, config.mention_threshold)
    })
}

/// Smallest scene id not yet visited.
pub fn next_scene_suggestion(state: &SessionState, tree: &MemoryTree) -> Option<u32> {
    tree.scene_ids().find(|s| !state.visited_scenes.contains(s))
}

/// The current scene is exhausted, the last user turn was not a question,
/// and some scene is still unvisited.
pub fn should_suggest_new_scene(state: &SessionState, tree: &MemoryTree, config: &DialogueConfig) -> bool {
    let asked = state
        .last_user_turn()
        .is_some_and(|t| t.annotations.classified_as == Some(InputKind::Question));
    !asked
        && next_undiscussed_detail(state, tree, state.current_scene, config).is_none()
        && next_scene_suggestion(state, tree).is_some()
}

fn all_exhausted(state: &SessionState, tree: &MemoryTree, config: &DialogueConfig) -> bool {
    tree.scene_ids().all(|s| state.visited_scenes.contains(&s))
        && tree.scene_ids().all(|s| next_undiscussed_detail(state, tree, s, config).is_none())
}

/// Picks this turn's guidance for `scene_id` and applies its side effects
/// to `state`:
/// 1. first entry into a scene introduces its activity (marks it visited);
/// 2. otherwise the next undiscussed detail, skipping any the raw reply
///    already covered;
/// 3. otherwise, when the suggestion criterion holds, a summary of this
///    scene and a proposal of the next unvisited one;
/// 4. otherwise, once every scene is visited and exhausted, the final
///    summary (concludes the session);
/// 5. otherwise nothing.
pub fn compose_guidance(
    state: &mut SessionState,
    tree: &MemoryTree,
    scene_id: u32,
    raw_reply: &str,
    config: &DialogueConfig,
) -> Guidance {
    let Some(scene) = tree.scene(scene_id) else {
        return Guidance::none();
    };
    if state.visited_scenes.insert(scene_id) {
        return Guidance::new(GuidanceKind::ActivityIntro, activity_intro_text(scene));
    }

    let mut covered = Vec::new();
    while let Some(detail) = next_undiscussed_detail(state, tree, scene_id, config) {
        state.mark_discussed(scene_id, &detail.detail_id);
        if is_mentioned_in(detail, raw_reply, config.mention_threshold) {
            covered.push(detail.detail_id.clone());
            continue;
        }
        let mut g = Guidance::new(GuidanceKind::Detail, detail_text(detail));
        g.emitted_detail_id = Some(detail.detail_id.clone());
        g.covered_by_reply = covered;
        return g;
    }

    let mut g = if should_suggest_new_scene(state, tree, config) {
        let next = next_scene_suggestion(state, tree).expect("suggestion criterion implies an unvisited scene");
        state.pending_suggestion = Some(next);
        let mut g = Guidance::new(GuidanceKind::SceneSuggestion, suggestion_text(state, scene, tree.scene(next)));
        g.suggested_scene = Some(next);
        g
    } else if state.phase != Phase::Concluded && all_exhausted(state, tree, config) {
        state.phase = Phase::Concluded;
        Guidance::new(GuidanceKind::FinalSummary, final_summary_text(tree))
    } else {
        Guidance::none()
    };
    g.covered_by_reply = covered;
    g
}

pub fn opening_text(tree: &MemoryTree) -> String {
    let mut s = format!(
        "Your photos tell a story in {} scene{}:\n",
        tree.storyline.len(),
        if tree.storyline.len() == 1 { "" } else { "s" }
    );
    for (i, entry) in tree.storyline.iter().enumerate() {
        s.push_str(&format!("{}. {}\n", i + 1, entry.summary_sentence));
    }
    let first = tree.storyline.first().map(|e| e.scene_id).unwrap_or(1);
    s.push_str(&format!("Shall we start with scene {first}?"));
    s
}

fn activity_intro_text(scene: &Scene) -> String {
    let mut s = format!("Scene {}. {}", scene.scene_id, scene.activity.sentence);
    for r in &scene.activity.reasons {
        s.push(' ');
        s.push_str(r);
    }
    s
}

fn detail_text(detail: &SceneDetail) -> String {
    let d = detail.description.trim_end_matches('.');
    format!("One more detail: {d}.")
}

fn suggestion_text(state: &SessionState, scene: &Scene, next: Option<&Scene>) -> String {
    let covered = state.discussed_details.get(&scene.scene_id).map_or(0, BTreeSet::len);
    let total = scene.details.len();
    let mut s = format!(
        "We have talked about all the key contents in the current scene: {} ({covered} of {total} details covered).",
        scene.summary_sentence
    );
    match next {
        Some(n) => s.push_str(&format!(
            " Do you want to proceed to the next scene? Scene {}: {}",
            n.scene_id, n.summary_sentence
        )),
        None => s.push_str(" Do you want to proceed to the next scene?"),
    }
    s
}

fn final_summary_text(tree: &MemoryTree) -> String {
    let mut s = format!("We have explored all {} scenes. Here is your story from beginning to end:\n", tree.scenes.len());
    for (i, entry) in tree.storyline.iter().enumerate() {
        s.push_str(&format!("{}. {}\n", i + 1, entry.summary_sentence));
    }
    s.push_str("Thank you for reliving these memories with me.");
    s
}

pub fn notice_text(notice: &Notice) -> String {
    match notice {
        Notice::NoLaterScene => "This is already the last scene, so there is no later scene to move to.".to_string(),
        Notice::NoMatch { keyword } => {
            format!("I could not find a scene about \"{keyword}\", so let's stay with the current one.")
        }
    }
}
