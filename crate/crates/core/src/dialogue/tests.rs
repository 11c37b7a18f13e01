use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::domain::{
    Aspects, BuildMetadata, DetailCategory, InputKind, Scene, SceneActivity, SceneDetail, Speaker, StorylineEntry,
};
use crate::gateway::{GatewayConfig, MockAnnotations, MockBackend, MockReply};
use crate::synth;

fn scene(id: u32, sentence: &str, reason: &str, summary: &str, details: &[&str]) -> Scene {
    Scene {
        scene_id: id,
        photo_ids: vec![format!("p{id}a"), format!("p{id}b")],
        activity: SceneActivity {
            sentence: sentence.to_string(),
            aspects: Aspects::default(),
            reasons: vec![reason.to_string()],
            char_budget: 100,
        },
        details: details
            .iter()
            .enumerate()
            .map(|(i, d)| SceneDetail {
                detail_id: crate::domain::detail_id(id, i + 1),
                category: DetailCategory::Others,
                description: d.to_string(),
            })
            .collect(),
        summary_sentence: summary.to_string(),
    }
}

fn campus() -> MemoryTree {
    let scenes = vec![
        scene(1, "You and classmates gather at the gate in the morning.", "Everyone wears a badge.", "Meeting at the gate.", &["a crimson kite", "a tall lamp post"]),
        scene(
            2,
            "You and friends have lunch in the canteen at noon.",
            "A 'student canteen' sign hangs at the entrance.",
            "Lunch in the canteen.",
            &["a striped umbrella", "a bowl of noodles", "a long red dress"],
        ),
        scene(3, "You walk along the shore in the evening.", "Waves and sand fill the frame.", "An evening on the sand.", &["a wooden beach hut", "a tortoise shell", "a silver anchor", "a copper sundial"]),
    ];
    MemoryTree {
        schema_version: 1,
        collection_id: "campus".to_string(),
        storyline: scenes.iter().map(|s| StorylineEntry { scene_id: s.scene_id, summary_sentence: s.summary_sentence.clone() }).collect(),
        scenes,
        build_metadata: BuildMetadata {
            similarity_threshold: 0.5,
            model_id: "mock".into(),
            built_at: chrono::DateTime::UNIX_EPOCH,
            source_manifest: None,
        },
    }
}

fn engine_with(tree: MemoryTree, annotations: MockAnnotations) -> ReviverEngine {
    let gw = Gateway::new(Arc::new(MockBackend::new(annotations)), GatewayConfig::default());
    ReviverEngine::new(Arc::new(tree), Arc::new(gw), DialogueConfig::default()).unwrap()
}

fn engine(tree: MemoryTree) -> ReviverEngine {
    engine_with(tree, MockAnnotations::default())
}

fn cfg() -> DialogueConfig {
    DialogueConfig::default()
}

#[test]
fn opening_lists_storyline_and_suggests_scene_one() {
    let e = engine(campus());
    let state = e.start_session("s");
    assert_eq!(state.phase, Phase::Opened);
    assert_eq!(state.current_scene, 1);
    assert_eq!(state.pending_suggestion, Some(1));
    assert!(state.visited_scenes.is_empty());
    let text = &state.history[0].text;
    let positions: Vec<usize> = ["Meeting at the gate.", "Lunch in the canteen.", "An evening on the sand."]
        .iter()
        .map(|s| text.find(s).unwrap())
        .collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]));
    assert!(text.find("scene 1").unwrap() > positions[2]);
}

#[test]
fn single_scene_opening() {
    let mut t = campus();
    t.scenes.truncate(1);
    t.storyline.truncate(1);
    let state = engine(t).start_session("s");
    assert!(state.history[0].text.contains("1. Meeting at the gate."));
    assert!(state.history[0].text.contains("scene 1?"));
}

#[test]
fn invalid_tree_is_refused() {
    let mut t = campus();
    t.storyline.pop();
    let gw = Arc::new(Gateway::mock());
    assert!(matches!(ReviverEngine::new(Arc::new(t), gw, cfg()), Err(DialogueError::InvalidTree(_))));
}

fn state_at(current: u32, pending: Option<u32>) -> SessionState {
    let mut s = SessionState::new("s", "campus");
    s.current_scene = current;
    s.pending_suggestion = pending;
    s.visited_scenes = (1..=current).collect();
    s
}

#[test]
fn selection_examples() {
    let t = campus();
    let c = cfg();
    let cls = |text: &str, st: &SessionState| classify_input(text, st.pending_suggestion.is_some(), &c);

    let st = state_at(1, Some(2));
    assert_eq!(select_scene(&st, &t, &cls("Okay", &st)).scene_id, 2);

    let st = state_at(1, None);
    assert_eq!(select_scene(&st, &t, &cls("Next scene", &st)).scene_id, 2);

    let sel = select_scene(&st, &t, &cls("Let's talk about the beach", &st));
    assert_eq!((sel.scene_id, sel.rule), (3, SelectionRule::Switch));

    let st = state_at(3, None);
    let sel = select_scene(&st, &t, &cls("Next scene", &st));
    assert_eq!((sel.scene_id, sel.notice), (3, Some(Notice::NoLaterScene)));

    let sel = select_scene(&st, &t, &cls("Let's talk about quantum physics", &st));
    assert_eq!(sel.scene_id, 3);
    assert!(matches!(sel.notice, Some(Notice::NoMatch { .. })));
}

#[test]
fn switch_ties_go_to_earliest_scene() {
    let t = campus();
    // "a" is a stopword; "canteen" and "sand" each hit one scene.
    assert_eq!(strategy::match_scene(&t, "canteen sand"), Some(2));
    assert_eq!(strategy::match_scene(&t, "the"), None);
}

/// Independent statement of the selection rules, one row per
/// (pending suggestion?, input kind).
#[test]
fn rule_table() {
    let t = campus();
    let inputs: [(InputClass, &str); 7] = [
        (InputClass::of(InputKind::Acceptance), "accept"),
        (InputClass::of(InputKind::Rejection), "reject"),
        (InputClass::of(InputKind::NextSceneCmd), "next"),
        (InputClass { kind: InputKind::SwitchCmd, keyword: Some("sand".into()) }, "switch-hit"),
        (InputClass { kind: InputKind::SwitchCmd, keyword: Some("zebra".into()) }, "switch-miss"),
        (InputClass::of(InputKind::Question), "question"),
        (InputClass::of(InputKind::Statement), "statement"),
    ];
    for pending in [Some(3u32), None] {
        for (input, label) in &inputs {
            let st = state_at(1, pending);
            let sel = select_scene(&st, &t, input);
            let expected = match (*label, pending) {
                ("accept", Some(p)) => (p, SelectionRule::AcceptedSuggestion),
                ("next", _) => (2, SelectionRule::NextScene),
                ("switch-hit", _) => (3, SelectionRule::Switch),
                _ => (1, SelectionRule::Unchanged),
            };
            assert_eq!((sel.scene_id, sel.rule), expected, "pending={pending:?} input={label}");
            assert_eq!(sel.notice.is_some(), *label == "switch-miss", "{label}");
        }
    }
}

#[test]
fn detail_cursor() {
    let t = campus();
    let c = cfg();
    let mut st = state_at(2, None);
    assert_eq!(strategy::next_undiscussed_detail(&st, &t, 2, &c).unwrap().detail_id, "s2-d1");
    st.mark_discussed(2, "s2-d1");
    st.mark_discussed(2, "s2-d2");
    assert_eq!(strategy::next_undiscussed_detail(&st, &t, 2, &c).unwrap().detail_id, "s2-d3");
    st.mark_discussed(2, "s2-d3");
    assert!(strategy::next_undiscussed_detail(&st, &t, 2, &c).is_none());
}

#[test]
fn detail_mentioned_in_history_counts_as_discussed() {
    let t = campus();
    let mut st = state_at(2, None);
    st.history.push(ChatTurn::user(0, "I wore that long red dress all day", Some(InputKind::Statement)));
    let c = cfg();
    let mut seen = Vec::new();
    while let Some(d) = strategy::next_undiscussed_detail(&st, &t, 2, &c) {
        seen.push(d.detail_id.clone());
        st.mark_discussed(2, &d.detail_id);
    }
    assert_eq!(seen, ["s2-d1", "s2-d2"]);
}

#[test]
fn suggestion_criterion() {
    let t = campus();
    let c = cfg();
    let mut st = state_at(2, None);
    for d in ["s2-d1", "s2-d2"] {
        st.mark_discussed(2, d);
    }
    assert!(!strategy::should_suggest_new_scene(&st, &t, &c));
    st.mark_discussed(2, "s2-d3");
    st.history.push(ChatTurn::user(0, "nice", Some(InputKind::Statement)));
    assert!(strategy::should_suggest_new_scene(&st, &t, &c));
    st.history.push(ChatTurn::user(1, "why?", Some(InputKind::Question)));
    assert!(!strategy::should_suggest_new_scene(&st, &t, &c));

    st.visited_scenes = (1..=3).collect();
    st.history.clear();
    assert!(!strategy::should_suggest_new_scene(&st, &t, &c));
}

#[test]
fn next_scene_suggestion_examples() {
    let t = campus();
    let mut st = state_at(1, None);
    assert_eq!(strategy::next_scene_suggestion(&st, &t), Some(2));
    st.visited_scenes.insert(2);
    assert_eq!(strategy::next_scene_suggestion(&st, &t), Some(3));
    st.visited_scenes.insert(3);
    assert_eq!(strategy::next_scene_suggestion(&st, &t), None);
}

#[test]
fn guidance_examples() {
    let t = campus();
    let c = cfg();
    let mut st = state_at(1, None);
    st.current_scene = 2;
    let g = compose_guidance(&mut st, &t, 2, "", &c);
    assert_eq!(g.kind, GuidanceKind::ActivityIntro);
    assert!(g.text.contains("have lunch in the canteen"));
    assert!(g.text.contains("'student canteen' sign"));
    assert!(st.visited_scenes.contains(&2));

    for d in ["s2-d1", "s2-d2", "s2-d3"] {
        st.mark_discussed(2, d);
    }
    st.history.push(ChatTurn::user(0, "lovely", Some(InputKind::Statement)));
    let g = compose_guidance(&mut st, &t, 2, "", &c);
    assert_eq!(g.kind, GuidanceKind::SceneSuggestion);
    assert_eq!(g.suggested_scene, Some(3));
    assert_eq!(st.pending_suggestion, Some(3));
    assert!(g.text.starts_with("We have talked about all the key contents in the current scene: Lunch in the canteen."));
    assert!(g.text.contains("(3 of 3 details covered)"));
    assert!(g.text.contains("Do you want to proceed to the next scene? Scene 3: An evening on the sand."));

    let mut st = state_at(3, None);
    for (s, n) in [(1, 2), (2, 3), (3, 4)] {
        for i in 1..=n {
            st.mark_discussed(s, &crate::domain::detail_id(s, i));
        }
    }
    let g = compose_guidance(&mut st, &t, 3, "", &c);
    assert_eq!(g.kind, GuidanceKind::FinalSummary);
    assert_eq!(st.phase, Phase::Concluded);
}

#[test]
fn reply_covering_a_detail_skips_it() {
    let t = campus();
    let mut st = state_at(2, None);
    let g = compose_guidance(&mut st, &t, 2, "There is a striped umbrella by the door.", &cfg());
    assert_eq!(g.emitted_detail_id.as_deref(), Some("s2-d2"));
    assert_eq!(g.covered_by_reply, ["s2-d1"]);
    assert!(st.is_discussed(2, "s2-d1"));
}

fn run(engine: &ReviverEngine, inputs: &[&str]) -> SessionState {
    let mut st = engine.start_session("s");
    for i in inputs {
        engine.reply(&mut st, i).unwrap();
    }
    st
}

fn emitted(st: &SessionState) -> Vec<String> {
    st.history.iter().filter_map(|t| t.annotations.emitted_detail_id.clone()).collect()
}

fn run_compliant(engine: &ReviverEngine) -> SessionState {
    let mut st = engine.start_session("s");
    let mut n = 0;
    while st.phase != Phase::Concluded {
        let text = if n % 2 == 0 { "Okay" } else { "Go on" };
        engine.reply(&mut st, text).unwrap();
        n += 1;
        assert!(n < 100, "no conclusion");
    }
    st
}

#[test]
fn compliant_user_covers_everything_once() {
    let t = campus();
    let e = engine(t.clone());
    let st = run_compliant(&e);
    assert_eq!(st.visited_scenes, BTreeSet::from([1, 2, 3]));
    let mut ids = emitted(&st);
    let total = ids.len();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), total);
    assert_eq!(total, t.detail_count());
    let bot_turns = st.history.iter().filter(|t| t.speaker == Speaker::Bot).count();
    let bound = 1 + t.scenes.iter().map(|s| 2 + s.details.len()).sum::<usize>() + 1;
    assert!(bot_turns <= bound, "{bot_turns} > {bound}");
    assert_eq!(st.history.iter().filter(|t| t.annotations.guidance_kind == Some(GuidanceKind::FinalSummary)).count(), 1);
    assert!(matches!(e.reply(&mut st.clone(), "more"), Err(DialogueError::Concluded(_))));
}

#[test]
fn question_gets_raw_answer_then_next_detail() {
    let e = engine_with(
        campus(),
        MockAnnotations {
            replies: vec![MockReply { scene_id: Some(1), keyword: "what color".into(), text: "It looks blue to me.".into() }],
            ..Default::default()
        },
    );
    let mut st = run(&e, &["Okay"]);
    let turn = e.reply(&mut st, "What color was the sky?").unwrap();
    assert_eq!(turn.annotations.classified_as, Some(InputKind::Question));
    assert_eq!(turn.text, "It looks blue to me.\n\nOne more detail: a crimson kite.");
}

#[test]
fn revisiting_a_scene_skips_the_intro() {
    let e = engine(campus());
    let mut st = run(&e, &["Okay", "Next scene", "Let's talk about the gate"]);
    let last = st.history.last().unwrap();
    assert_eq!(last.annotations.selected_scene, Some(1));
    assert_eq!(last.annotations.guidance_kind, Some(GuidanceKind::Detail));
    assert_eq!(st.history.iter().filter(|t| t.annotations.guidance_kind == Some(GuidanceKind::ActivityIntro)).count(), 2);
    let t = e.reply(&mut st, "Let's talk about the sand").unwrap();
    assert_eq!(t.annotations.guidance_kind, Some(GuidanceKind::ActivityIntro));
}

#[test]
fn next_scene_on_last_scene_is_clamped_with_notice() {
    let e = engine(campus());
    let st = run(&e, &["Next scene", "Next scene", "Next scene", "Next scene"]);
    let last = st.history.last().unwrap();
    assert_eq!(last.annotations.selected_scene, Some(3));
    assert!(last.text.contains("already the last scene"));
}

#[test]
fn rejection_keeps_scene_and_clears_pending() {
    let e = engine(campus());
    let mut st = run(&e, &["Okay", "Go on", "Go on", "Go on"]);
    assert_eq!(st.pending_suggestion, Some(2));
    let t = e.reply(&mut st, "No, not yet.").unwrap();
    assert_eq!(t.annotations.classified_as, Some(InputKind::Rejection));
    assert_eq!(t.annotations.selected_scene, Some(1));
    // The criterion still holds, so the suggestion is repeated.
    assert_eq!(t.annotations.guidance_kind, Some(GuidanceKind::SceneSuggestion));
}

#[test]
fn gateway_failure_leaves_state_alone() {
    struct Down;
    impl crate::gateway::ModelBackend for Down {
        fn model_id(&self) -> &str {
            "down"
        }
        fn complete(&self, _: &crate::gateway::ModelRequest) -> Result<String, crate::gateway::BackendError> {
            Err(crate::gateway::BackendError::Rejected("nope".into()))
        }
    }
    let gw = Gateway::new(Arc::new(Down), GatewayConfig::default());
    let e = ReviverEngine::new(Arc::new(campus()), Arc::new(gw), cfg()).unwrap();
    let mut st = e.start_session("s");
    let before = st.clone();
    let turn = e.reply(&mut st, "Okay").unwrap();
    assert!(turn.is_error());
    assert_eq!(st.history.len(), 3);
    st.history.truncate(1);
    assert_eq!(st, before);
}

#[test]
fn random_trees_conclude_with_full_coverage() {
    for seed in 0..30 {
        let t = synth::random_tree(seed);
        let st = run_compliant(&engine(t.clone()));
        assert_eq!(st.visited_scenes.len(), t.scenes.len(), "seed {seed}");
        assert_eq!(emitted(&st).len(), t.detail_count(), "seed {seed}");
    }
}

const VOCAB: &[&str] = &[
    "Okay", "Go on", "No", "not yet", "Next scene", "Let's talk about the canteen", "Let's talk about the sand",
    "Let's talk about zebras", "What was that?", "who was there", "I remember it well", "a striped umbrella",
    "", "Tell me more",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn session_invariants_hold_for_any_script(script in prop::collection::vec(0..VOCAB.len(), 0..40)) {
        let t = campus();
        let e = engine(t.clone());
        let mut st = e.start_session("s");
        let mut finals = 0;
        for i in script {
            if st.phase == Phase::Concluded {
                break;
            }
            let visited_before = st.visited_scenes.clone();
            let turn = e.reply(&mut st, VOCAB[i]).unwrap();
            prop_assert!(st.check(&t).is_empty(), "{:?}", st.check(&t));
            match turn.annotations.guidance_kind {
                Some(GuidanceKind::SceneSuggestion) => {
                    let s = turn.annotations.suggested_scene.unwrap();
                    prop_assert!(!visited_before.contains(&s) && !st.visited_scenes.contains(&s));
                    prop_assert_eq!(st.pending_suggestion, Some(s));
                }
                Some(GuidanceKind::FinalSummary) => {
                    finals += 1;
                    prop_assert_eq!(st.visited_scenes.len(), t.scenes.len());
                }
                _ => prop_assert_eq!(st.pending_suggestion, None),
            }
        }
        prop_assert!(finals <= 1);
        let ids = emitted(&st);
        let unique: BTreeSet<_> = ids.iter().collect();
        prop_assert_eq!(unique.len(), ids.len());
    }
}
