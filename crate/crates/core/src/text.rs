//! Locale-aware tokenisation shared by the dialogue rules and the metrics.

use std::collections::BTreeSet;

/// Common English function words ignored when comparing content.
const EN_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "all", "also", "am", "an", "and", "any", "are", "as",
    "at", "be", "been", "being", "but", "by", "can", "could", "did", "do", "does", "for", "from",
    "had", "has", "have", "he", "her", "here", "hers", "him", "his", "how", "i", "if", "in",
    "into", "is", "it", "its", "just", "let", "lets", "me", "my", "of", "on", "one", "or", "our",
    "out", "over", "s", "she", "so", "some", "than", "that", "the", "their", "them", "then",
    "there", "these", "they", "this", "those", "to", "too", "up", "us", "very", "was", "we",
    "were", "what", "when", "where", "which", "while", "who", "with", "would", "you", "your",
];

const ZH_STOPWORDS: &[&str] = &["的", "了", "是", "在", "我", "你", "他", "她", "们", "这", "那", "和", "也", "有", "吗", "呢", "吧", "啊"];

/// True for locales whose words are written without spaces.
pub fn is_cjk_locale(locale: &str) -> bool {
    let lang = locale.split(['-', '_']).next().unwrap_or("").to_ascii_lowercase();
    matches!(lang.as_str(), "zh" | "ja" | "ko")
}

/// Han, kana and hangul code points.
pub fn is_cjk_char(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xAC00..=0xD7AF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F)
}

/// Lower-cased tokens. Runs of alphanumerics form one token; every CJK
/// character is a token of its own regardless of locale.
pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if is_cjk_char(c) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(c.to_string());
        } else if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub fn is_stopword(token: &str) -> bool {
    EN_STOPWORDS.binary_search(&token).is_ok() || ZH_STOPWORDS.contains(&token)
}

/// Distinct tokens minus stopwords.
pub fn content_tokens(text: &str) -> BTreeSet<String> {
    tokens(text).into_iter().filter(|t| !is_stopword(t)).collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokens(text).into_iter().collect()
}

/// Fraction of `needle`'s content tokens present in `haystack`. Zero when
/// `needle` has no content tokens.
pub fn coverage_fraction(needle: &BTreeSet<String>, haystack: &BTreeSet<String>) -> f64 {
    if needle.is_empty() {
        return 0.0;
    }
    let hit = needle.iter().filter(|t| haystack.contains(*t)).count();
    hit as f64 / needle.len() as f64
}

/// True when `phrase`'s tokens occur contiguously in `text`'s tokens.
pub fn contains_phrase(text_tokens: &[String], phrase: &str) -> bool {
    let p = tokens(phrase);
    if p.is_empty() || p.len() > text_tokens.len() {
        return false;
    }
    text_tokens.windows(p.len()).any(|w| w == p.as_slice())
}

/// Word count: whitespace-separated tokens, except that in CJK locales each
/// CJK character counts as one word (non-CJK runs still count per token).
pub fn word_count(text: &str, locale: &str) -> usize {
    if !is_cjk_locale(locale) {
        return text.split_whitespace().count();
    }
    let mut count = 0;
    let mut in_word = false;
    for c in text.chars() {
        if is_cjk_char(c) {
            count += 1;
            in_word = false;
        } else if c.is_whitespace() || (c.is_ascii_punctuation() && !in_word) || is_cjk_punct(c) {
            in_word = false;
        } else if !in_word {
            count += 1;
            in_word = true;
        }
    }
    count
}

fn is_cjk_punct(c: char) -> bool {
    matches!(c as u32, 0x3000..=0x303F | 0xFF00..=0xFF0F | 0xFF1A..=0xFF20)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopword_list_is_sorted_for_binary_search() {
        let mut sorted = EN_STOPWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, EN_STOPWORDS);
    }

    #[test]
    fn tokens_fold_case_and_split_cjk() {
        assert_eq!(tokens("Let's talk about the Beach!"), ["let", "s", "talk", "about", "the", "beach"]);
        assert_eq!(tokens("海边散步ok"), ["海", "边", "散", "步", "ok"]);
    }

    #[test]
    fn content_tokens_drop_stopwords() {
        let t = content_tokens("A red umbrella on the sand");
        assert_eq!(t.into_iter().collect::<Vec<_>>(), ["red", "sand", "umbrella"]);
    }

    #[test]
    fn phrase_containment_is_token_aligned() {
        let t = tokens("please go on then");
        assert!(contains_phrase(&t, "Go on"));
        assert!(!contains_phrase(&tokens("I know nothing"), "no"));
    }

    #[test]
    fn word_counts_by_locale() {
        assert_eq!(word_count("we walked by the sea", "en"), 5);
        assert_eq!(word_count("  ", "en"), 0);
        assert_eq!(word_count("我们在海边散步。", "zh-CN"), 7);
        assert_eq!(word_count("我们去了 Paris 玩", "zh"), 6);
    }
}
