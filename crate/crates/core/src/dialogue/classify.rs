//! Rule-based classification of user input.

use serde::{Deserialize, Serialize};

use super::DialogueConfig;
use crate::domain::InputKind;
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputClass {
    pub kind: InputKind,
    /// Scene keyword; set only for `SwitchCmd`, never empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyword: Option<String>,
}

impl InputClass {
    pub fn of(kind: InputKind) -> Self {
        InputClass { kind, keyword: None }
    }
}

/// Pluggable classifier; a model-backed implementation can replace the
/// keyword rules.
pub trait InputClassifier: Send + Sync {
    fn classify(&self, text: &str, suggestion_pending: bool) -> InputClass;
}

#[derive(Debug, Clone, Default)]
pub struct RuleClassifier {
    config: DialogueConfig,
}

impl RuleClassifier {
    pub fn new(config: DialogueConfig) -> Self {
        RuleClassifier { config }
    }
}

impl InputClassifier for RuleClassifier {
    fn classify(&self, text: &str, suggestion_pending: bool) -> InputClass {
        classify_input(text, suggestion_pending, &self.config)
    }
}

/// Precedence: switch command, next-scene command, acceptance/rejection
/// (only while a suggestion is pending), question, statement.
pub fn classify_input(text: &str, suggestion_pending: bool, config: &DialogueConfig) -> InputClass {
    if let Some(keyword) = switch_keyword(text, config) {
        return InputClass { kind: InputKind::SwitchCmd, keyword: Some(keyword) };
    }
    let toks = text::tokens(text);
    if config.next_scene_phrases.iter().any(|p| text::contains_phrase(&toks, p)) {
        return InputClass::of(InputKind::NextSceneCmd);
    }
    if suggestion_pending {
        if config.rejection_keywords.iter().any(|k| text::contains_phrase(&toks, k)) {
            return InputClass::of(InputKind::Rejection);
        }
        if config.acceptance_keywords.iter().any(|k| text::contains_phrase(&toks, k)) {
            return InputClass::of(InputKind::Acceptance);
        }
    }
    if is_question(text, &toks, config) {
        return InputClass::of(InputKind::Question);
    }
    InputClass::of(InputKind::Statement)
}

fn switch_keyword(text: &str, config: &DialogueConfig) -> Option<String> {
    let normalized = text.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'");
    config.switch_prefixes.iter().find_map(|prefix| {
        let at = normalized.find(&prefix.to_lowercase())?;
        let boundary_ok = normalized[..at].chars().last().is_none_or(|c| !c.is_alphanumeric() || text::is_cjk_char(c));
        if !boundary_ok {
            return None;
        }
        let rest = &normalized[at + prefix.len()..];
        let keyword = rest
            .trim()
            .trim_matches(|c: char| c.is_ascii_punctuation() || matches!(c, '。' | '？' | '！' | '，'))
            .trim();
        (!keyword.is_empty()).then(|| keyword.to_string())
    })
}

/// Ends with a question mark, ends with a question particle, or starts
/// with (for some locales: contains) an interrogative word.
pub fn is_question(text: &str, toks: &[String], config: &DialogueConfig) -> bool {
    let trimmed = text.trim_end();
    if trimmed.ends_with('?') || trimmed.ends_with('？') {
        return true;
    }
    let bare = trimmed.trim_end_matches(|c: char| c.is_ascii_punctuation() || matches!(c, '。' | '！'));
    if config.question_suffixes.iter().any(|s| !s.is_empty() && bare.ends_with(s.as_str())) {
        return true;
    }
    if config.interrogative_anywhere {
        return config.interrogatives.iter().any(|w| text::contains_phrase(toks, w));
    }
    toks.first().is_some_and(|first| config.interrogatives.iter().any(|w| w == first))
}
