//! Prompt templates for the six model tasks.

use std::fmt::Write;

use crate::domain::{ChatTurn, SceneActivity, Speaker};

/// Where/when/who/what clues to look for when inferring a scene activity.
pub const ACTIVITY_GUIDELINES: &str = "\
Where: landmarks (e.g. a famous tower); surroundings (sea, hills, canteens, museums); places written in texts (entrance signs, holiday banners).
When: season (clothes, tree leaves); day or night (lighting conditions); times written in texts (holiday banners, screens).
Who: visual appearance (age, gender, clothes, hair); names written in texts (name tags, badges).
What: human actions (e.g. playing musical instruments); objects (food, animals, roller coasters); actions written in texts (menus, conference banners).";

/// Per-category aspects worth describing as scene details.
pub const DETAIL_GUIDELINES: &str = "\
people: number of people; gender, age, hair, clothes, facial expression, pose.
food: name, color, shape.
animals: breed, color, size.
plants: species, color, shape, height.
buildings: color, shape, style.
texts: the raw text and where it appears (e.g. on a screen).
others: color, shape.";

pub fn describe_photo(locale: &str) -> String {
    format!(
        "Describe this photo in one paragraph for a person with a visual impairment. \
Mention the setting, the people, notable objects and any visible text. Answer in locale {locale}."
    )
}

pub fn score_similarity() -> String {
    "You are given two adjacent photos from the same photo collection. Assess how similar the \
activity shown in them is (who, what, when, where) on a scale of 0 to 1, where 1 means the same \
activity. Reply with a fenced JSON block: ```json\n{\"similarity\": <number>}\n```"
        .to_string()
}

pub fn extract_scene(char_budget: usize, with_portrait: bool) -> String {
    let portrait = if with_portrait {
        "The last image is a portrait of the user; refer to the user as \"you\" when they appear.\n"
    } else {
        ""
    };
    format!(
        "All photos below belong to one scene of a photo collection.\n{portrait}\
1. Write one sentence (at most {char_budget} characters) describing the scene activity: who, what, \
when and where. For each aspect you can infer, give the reason, citing the visual clue. Use these guidelines:\n\
{ACTIVITY_GUIDELINES}\n\
2. List the visual details of the scene, one per item, each with a category from \
[people, food, animals, plants, buildings, texts, others]. Use these guidelines:\n{DETAIL_GUIDELINES}\n\
Reply with a fenced JSON block:\n```json\n{{\"activity\": {{\"sentence\": \"...\", \
\"aspects\": {{\"who\": \"...\", \"what\": \"...\", \"when\": \"...\", \"where\": \"...\"}}, \
\"reasons\": [\"...\"]}}, \"details\": [{{\"category\": \"...\", \"description\": \"...\"}}]}}\n```"
    )
}

pub fn shorten_activity(char_budget: usize, previous: &str) -> String {
    format!(
        "The activity sentence \"{previous}\" is longer than {char_budget} characters. \
Rewrite it within {char_budget} characters and reply with the same JSON structure."
    )
}

pub fn generate_storyline(scenes: &[(u32, &SceneActivity)]) -> String {
    let mut s = String::from(
        "Summarize each scene briefly with a short sentence and then list them in chronological \
order from the beginning to the end.\n\nScenes:\n",
    );
    for (id, act) in scenes {
        let _ = writeln!(s, "Scene {id}: {}", act.sentence);
        for r in &act.reasons {
            let _ = writeln!(s, "  - {r}");
        }
    }
    let _ = write!(
        s,
        "\nReply with a fenced JSON block containing exactly {} sentences:\n```json\n{{\"storyline\": [\"...\"]}}\n```",
        scenes.len()
    );
    s
}

pub fn storyline_count_fix(expected: usize, got: usize) -> String {
    format!("You returned {got} sentences but there are {expected} scenes. Return exactly {expected}, one per scene, in order.")
}

pub fn generate_reply(user_input: &str, history: &[ChatTurn]) -> String {
    let mut s = String::from(
        "Your task is to generate a response to the user input, based on the chat history and the photos.\n\nChat history:\n",
    );
    push_history(&mut s, history);
    let _ = write!(s, "\nUser input: {user_input}");
    s
}

pub fn select_photos(user_input: &str, history: &[ChatTurn], descriptions: &[(String, String)]) -> String {
    let mut s = String::from(
        "Below are text descriptions of all photos in a collection. Select the five photos most \
relevant to the user input, considering the chat history.\n\nPhotos:\n",
    );
    for (id, d) in descriptions {
        let _ = writeln!(s, "[{id}] {d}");
    }
    s.push_str("\nChat history:\n");
    push_history(&mut s, history);
    let _ = write!(
        s,
        "\nUser input: {user_input}\n\nReply with a fenced JSON block:\n```json\n{{\"photo_ids\": [\"...\"]}}\n```"
    );
    s
}

pub fn json_repair() -> &'static str {
    "Your previous answer could not be parsed. Reply again with only the fenced JSON block in the requested structure."
}

fn push_history(s: &mut String, history: &[ChatTurn]) {
    if history.is_empty() {
        s.push_str("(none)\n");
    }
    for t in history {
        let who = match t.speaker {
            Speaker::User => "User",
            Speaker::Bot => "Assistant",
        };
        let _ = writeln!(s, "{who}: {}", t.text);
    }
}
