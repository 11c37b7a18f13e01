mod common;

use reviver_core::dialogue::strategy::is_mentioned_in;
use reviver_core::domain::{GuidanceKind, Speaker};
use reviver_core::eval::tree_cut_points;
use reviver_core::gateway::{MockAnnotations, Task, MOCK_ANNOTATIONS_FILE};
use reviver_core::Exec;

use common::{fixture, fixture_dir, FIXTURES};

#[test]
fn campus_day_builds_as_annotated() {
    let f = fixture("campus_day");
    let tree = f.build(Exec::Parallel);
    let ann = MockAnnotations::load(&fixture_dir("campus_day").join(MOCK_ANNOTATIONS_FILE)).unwrap();
    assert_eq!(tree.scenes.len(), 3);
    assert_eq!(tree.storyline.len(), 3);
    let counts: Vec<usize> = tree.scenes.iter().map(|s| s.details.len()).collect();
    assert_eq!(counts, [2, 3, 4]);
    for (scene, want) in tree.scenes.iter().zip(&ann.scenes) {
        assert_eq!(scene.photo_ids, want.photo_ids);
        let got: Vec<&str> = scene.details.iter().map(|d| d.description.as_str()).collect();
        let expected: Vec<&str> = want.details.iter().map(|d| d.description.as_str()).collect();
        assert_eq!(got, expected);
        assert_eq!(scene.summary_sentence, want.summary);
    }
    let canteen = &tree.scenes[1].activity;
    assert_eq!(canteen.aspects.r#where.as_deref(), Some("canteen"));
    assert!(canteen.reasons.iter().any(|r| r.contains("'student canteen' sign")));
    assert_eq!(tree.scenes[2].details.iter().map(|d| d.detail_id.as_str()).collect::<Vec<_>>(), ["s3-d1", "s3-d2", "s3-d3", "s3-d4"]);
}

#[test]
fn wedding_is_ordered_by_time_not_manifest() {
    let f = fixture("wedding");
    let tree = f.build(Exec::Sequential);
    assert_eq!(tree.scenes.len(), 5);
    assert_eq!(tree.scenes[0].photo_ids, ["w1", "w2"]);
    assert_eq!(tree.scenes[3].photo_ids, ["w7", "w8"]);
    assert_eq!(tree_cut_points(&tree, &f.manifest).into_iter().collect::<Vec<_>>(), [1, 3, 5, 7]);
}

#[test]
fn hike_sends_the_portrait_and_keeps_the_untimed_photo_last() {
    let f = fixture("hike");
    let tree = f.build(Exec::Parallel);
    assert_eq!(tree.scenes.len(), 2);
    assert_eq!(tree.scenes[1].photo_ids.last().map(String::as_str), Some("h4"));
    assert!(tree.scenes[1].activity.aspects.when.is_none());
    assert!(f.manifest.portrait_photo.as_ref().unwrap().is_absolute());
}

#[test]
fn seaside_beach_selection() {
    let f = fixture("seaside_40");
    let engine = f.baseline();
    let mut st = engine.start_session("s");
    let turn = engine.reply(&mut st, "Tell me about the beach").unwrap();
    assert_eq!(turn.annotations.selected_photos.unwrap(), ["p3", "p9", "p17", "p22", "p30"]);
}

#[test]
fn canned_descriptions_are_stable_and_cached() {
    let f = fixture("campus_day");
    let p6 = f.manifest.photo("p6").unwrap();
    let a = f.gateway.describe_photo(p6).unwrap();
    let b = f.gateway.describe_photo(p6).unwrap();
    assert_eq!(a, "A sandy shore with a striped umbrella and gentle waves.");
    assert_eq!(a, b);
    assert_eq!(f.gateway.backend_calls(Task::DescribePhoto), 1);
}

#[test]
fn fixture_details_do_not_leak_into_other_text() {
    for name in FIXTURES {
        let tree = fixture(name).build(Exec::Sequential);
        for scene in &tree.scenes {
            let mut other: Vec<String> = tree.scenes.iter().map(|s| s.summary_sentence.clone()).collect();
            other.push(scene.activity.sentence.clone());
            other.extend(scene.activity.reasons.iter().cloned());
            for d in &scene.details {
                for text in &other {
                    assert!(!is_mentioned_in(d, text, 0.6), "{name}: {} appears in {text:?}", d.detail_id);
                }
            }
        }
    }
}

#[test]
fn keyed_reply_covers_the_dress_detail() {
    let f = fixture("campus_day");
    let tree = f.build(Exec::Sequential);
    let engine = f.reviver(&tree);
    let mut st = engine.start_session("s");
    for text in ["Okay", "Next scene"] {
        engine.reply(&mut st, text).unwrap();
    }
    let turn = engine.reply(&mut st, "What color is the dress?").unwrap();
    assert!(turn.text.starts_with("In the photo your roommate is wearing a bright red dress"));
    assert_eq!(turn.annotations.emitted_detail_id.as_deref(), Some("s2-d1"));
    let turn = engine.reply(&mut st, "Go on").unwrap();
    // s2-d2 already came up in the reply, so the cursor moves past it.
    assert_eq!(turn.annotations.emitted_detail_id.as_deref(), Some("s2-d3"));
}

#[test]
fn revisiting_scene_one_by_keyword() {
    let f = fixture("campus_day");
    let tree = f.build(Exec::Sequential);
    let engine = f.reviver(&tree);
    let mut st = engine.start_session("s");
    for text in ["Okay", "Go on", "Go on", "Go on"] {
        engine.reply(&mut st, text).unwrap();
    }
    assert_eq!(st.history.last().unwrap().annotations.guidance_kind, Some(GuidanceKind::SceneSuggestion));
    let turn = engine.reply(&mut st, "Let's talk about the beach").unwrap();
    assert_eq!(turn.annotations.selected_scene, Some(3));
    assert_eq!(turn.annotations.guidance_kind, Some(GuidanceKind::ActivityIntro));
    let turn = engine.reply(&mut st, "Let's talk about the university gate").unwrap();
    assert_eq!(turn.annotations.selected_scene, Some(1));
    assert_ne!(turn.annotations.guidance_kind, Some(GuidanceKind::ActivityIntro));
    assert!(st.history.iter().filter(|t| t.speaker == Speaker::Bot).all(|t| !t.is_error()));
}
