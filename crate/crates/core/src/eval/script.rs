//! Scripted stand-ins for human participants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ChatTurn, GuidanceKind};

pub const DEFAULT_MAX_TURNS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Persona {
    /// Accepts every suggestion ("Okay" / "Go on").
    Compliant,
    /// Mostly compliant, but asks about what it sees now and then.
    Curious,
    /// Keeps asking for the next scene.
    SceneHopper,
    /// Answers briefly for a few turns, then leaves.
    SilentQuitter,
}

impl std::str::FromStr for Persona {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
            format!("unknown persona {s:?} (expected compliant|curious|scene_hopper|silent_quitter)")
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserScript {
    pub persona: Persona,
    /// Fixed inputs; when present they replace the persona's generator and
    /// the user leaves once they run out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<String>>,
    #[serde(default = "default_max_turns")]
    pub max_turns: usize,
}

fn default_max_turns() -> usize {
    DEFAULT_MAX_TURNS
}

impl UserScript {
    pub fn persona(persona: Persona) -> Self {
        UserScript { persona, steps: None, max_turns: DEFAULT_MAX_TURNS }
    }

    pub fn steps(steps: impl IntoIterator<Item = impl Into<String>>) -> Self {
        UserScript {
            persona: Persona::Compliant,
            steps: Some(steps.into_iter().map(Into::into).collect()),
            max_turns: DEFAULT_MAX_TURNS,
        }
    }

    pub fn with_max_turns(mut self, max_turns: usize) -> Self {
        self.max_turns = max_turns;
        self
    }
}

const CURIOUS_QUESTIONS: &[&str] = &[
    "Who else was there?",
    "What was I wearing?",
    "Where was this taken?",
    "What happened after that?",
    "Why were we there?",
];

/// The simulated user. Produces one input per bot turn, or `None` to leave.
#[derive(Debug, Clone)]
pub struct ScriptedUser {
    script: UserScript,
    rng: ChaCha8Rng,
    sent: usize,
    quit_after: usize,
    last_scene: Option<u32>,
    asked_next: bool,
}

impl ScriptedUser {
    pub fn new(script: UserScript, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let quit_after = rng.random_range(1..=4);
        ScriptedUser { script, rng, sent: 0, quit_after, last_scene: None, asked_next: false }
    }

    pub fn max_turns(&self) -> usize {
        self.script.max_turns
    }

    /// Next user input given the latest bot turn.
    pub fn next_input(&mut self, last_bot: &ChatTurn) -> Option<String> {
        let a = &last_bot.annotations;
        if a.guidance_kind == Some(GuidanceKind::FinalSummary) {
            return None;
        }
        let clamped = self.asked_next && a.selected_scene.is_some() && a.selected_scene == self.last_scene;
        if a.selected_scene.is_some() {
            self.last_scene = a.selected_scene;
        }
        self.asked_next = false;

        let out = match &self.script.steps {
            Some(steps) => steps.get(self.sent).cloned(),
            None => self.generate(clamped),
        };
        if out.is_some() {
            self.sent += 1;
        }
        out
    }

    fn compliant(&self) -> String {
        if self.sent.is_multiple_of(2) { "Okay" } else { "Go on" }.to_string()
    }

    fn generate(&mut self, clamped: bool) -> Option<String> {
        match self.script.persona {
            Persona::Compliant => Some(self.compliant()),
            Persona::Curious => {
                if self.rng.random_bool(0.3) {
                    let q = CURIOUS_QUESTIONS[self.rng.random_range(0..CURIOUS_QUESTIONS.len())];
                    Some(q.to_string())
                } else {
                    Some(self.compliant())
                }
            }
            Persona::SceneHopper => {
                if clamped {
                    return None;
                }
                if self.rng.random_bool(0.7) {
                    self.asked_next = true;
                    Some("Next scene".to_string())
                } else {
                    Some(self.compliant())
                }
            }
            Persona::SilentQuitter => (self.sent < self.quit_after).then(|| "Okay".to_string()),
        }
    }
}
