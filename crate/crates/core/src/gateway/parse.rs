//! Tolerant parsers for model output. Structured payloads are requested as
//! fenced JSON; everything here also copes with surrounding prose.

use serde_json::Value;

use crate::domain::{Aspects, DetailCategory, SceneActivity};

/// First JSON object or array in `text`: a fenced ```json block if present,
/// otherwise the first balanced `{...}` / `[...]` that parses.
pub fn extract_json(text: &str) -> Option<Value> {
    if let Some(v) = fenced_block(text).and_then(|b| serde_json::from_str(b.trim()).ok()) {
        return Some(v);
    }
    let bytes = text.as_bytes();
    for (start, &b) in bytes.iter().enumerate() {
        if b != b'{' && b != b'[' {
            continue;
        }
        if let Some(end) = balanced_end(&text[start..]) {
            if let Ok(v) = serde_json::from_str(&text[start..start + end]) {
                return Some(v);
            }
        }
    }
    None
}

fn fenced_block(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let close = body.find("```")?;
    Some(&body[..close])
}

/// Byte length of the balanced bracket expression at the start of `s`,
/// skipping brackets inside JSON strings.
fn balanced_end(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Similarity rating from free text or JSON. Returns the raw number; the
/// caller clamps.
pub fn parse_similarity(text: &str) -> Option<f64> {
    if let Some(v) = extract_json(text) {
        let n = match &v {
            Value::Number(n) => n.as_f64(),
            Value::Object(map) => ["similarity", "score", "rating"]
                .iter()
                .find_map(|k| map.get(*k).and_then(Value::as_f64)),
            _ => None,
        };
        if n.is_some() {
            return n;
        }
    }
    first_number(text)
}

fn first_number(text: &str) -> Option<f64> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let starts = c.is_ascii_digit()
            || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()));
        if starts {
            let mut j = i;
            let mut seen_dot = false;
            while j < chars.len() && (chars[j].is_ascii_digit() || (chars[j] == '.' && !seen_dot)) {
                seen_dot |= chars[j] == '.';
                j += 1;
            }
            let lit: String = chars[i..j].iter().collect();
            let lit = lit.trim_end_matches('.');
            if let Ok(v) = lit.parse::<f64>() {
                let negative = i > 0 && chars[i - 1] == '-';
                let pct = chars.get(j) == Some(&'%');
                let v = if pct { v / 100.0 } else { v };
                return Some(if negative { -v } else { v });
            }
            i = j;
        } else {
            i += 1;
        }
    }
    None
}

/// Activity plus detail drafts as returned by the extraction prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneDraft {
    pub activity: SceneActivity,
    pub details: Vec<(DetailCategory, String)>,
}

pub fn parse_scene(text: &str, char_budget: usize) -> Option<SceneDraft> {
    let v = extract_json(text)?;
    let act = v.get("activity")?;
    let sentence = match act {
        Value::String(s) => s.clone(),
        _ => act.get("sentence")?.as_str()?.to_string(),
    };
    if sentence.trim().is_empty() {
        return None;
    }
    let aspect = |k: &str| {
        act.get("aspects")
            .and_then(|a| a.get(k))
            .or_else(|| act.get(k))
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
    };
    let aspects = Aspects { who: aspect("who"), what: aspect("what"), when: aspect("when"), r#where: aspect("where") };
    let reasons = act
        .get("reasons")
        .or_else(|| v.get("reasons"))
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
        .unwrap_or_default();
    let details = v
        .get("details")
        .and_then(Value::as_array)
        .map(|arr| {
            arr.iter()
                .filter_map(|d| match d {
                    Value::String(s) => Some((DetailCategory::Others, s.clone())),
                    Value::Object(_) => {
                        let desc = d.get("description")?.as_str()?.trim().to_string();
                        let cat = d.get("category").and_then(Value::as_str).unwrap_or("others");
                        (!desc.is_empty()).then(|| (DetailCategory::from_label(cat), desc))
                    }
                    _ => None,
                })
                .collect()
        })
        .unwrap_or_default();
    Some(SceneDraft {
        activity: SceneActivity { sentence: sentence.trim().to_string(), aspects, reasons, char_budget },
        details,
    })
}

/// Ordered summary sentences: a JSON list (bare or under `storyline` /
/// `summaries`), falling back to numbered lines.
pub fn parse_storyline(text: &str) -> Option<Vec<String>> {
    if let Some(v) = extract_json(text) {
        let arr = match &v {
            Value::Array(a) => Some(a),
            Value::Object(m) => m.get("storyline").or_else(|| m.get("summaries")).and_then(Value::as_array),
            _ => None,
        };
        if let Some(arr) = arr {
            let out: Vec<String> = arr
                .iter()
                .filter_map(|x| match x {
                    Value::String(s) => Some(s.trim().to_string()),
                    Value::Object(o) => o
                        .get("summary")
                        .or_else(|| o.get("sentence"))
                        .and_then(Value::as_str)
                        .map(|s| s.trim().to_string()),
                    _ => None,
                })
                .collect();
            return (!out.is_empty()).then_some(out);
        }
    }
    let numbered: Vec<String> = text
        .lines()
        .filter_map(|l| {
            let l = l.trim();
            let digits = l.chars().take_while(char::is_ascii_digit).count();
            if digits == 0 {
                return None;
            }
            let rest = l[digits..].trim_start_matches(['.', ')', ':']).trim();
            (!rest.is_empty()).then(|| rest.to_string())
        })
        .collect();
    (!numbered.is_empty()).then_some(numbered)
}

/// Photo ids chosen by the relevance prompt, in model order.
pub fn parse_photo_ids(text: &str) -> Option<Vec<String>> {
    let v = extract_json(text)?;
    let arr = match &v {
        Value::Array(a) => a,
        Value::Object(m) => m.get("photo_ids").or_else(|| m.get("photos")).and_then(Value::as_array)?,
        _ => return None,
    };
    Some(
        arr.iter()
            .filter_map(|x| match x {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            })
            .collect(),
    )
}

/// Cuts `sentence` to at most `budget` chars: at the last sentence end that
/// fits, else the last word boundary, else a hard cut.
pub fn truncate_to_budget(sentence: &str, budget: usize) -> String {
    if sentence.chars().count() <= budget {
        return sentence.to_string();
    }
    let prefix: String = sentence.chars().take(budget).collect();
    let sentence_end = prefix
        .char_indices()
        .filter(|&(i, c)| {
            matches!(c, '.' | '!' | '?' | '。' | '！' | '？')
                && prefix[i + c.len_utf8()..].chars().next().is_none_or(char::is_whitespace)
        })
        .map(|(i, c)| i + c.len_utf8())
        .next_back();
    if let Some(end) = sentence_end {
        return prefix[..end].trim_end().to_string();
    }
    // the char right after the prefix decides whether the prefix ends on a word
    let next = sentence.chars().nth(budget);
    if next.is_some_and(char::is_whitespace) {
        return prefix.trim_end().to_string();
    }
    match prefix.rfind(char::is_whitespace) {
        Some(ws) if ws > 0 => prefix[..ws].trim_end().to_string(),
        _ => prefix,
    }
}
