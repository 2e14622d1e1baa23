//! Tolerant extraction of ranked location ids from raw model text.
//!
//! Model output ranges from clean JSON to prose with an embedded list to
//! rambling text with no usable answer, so extraction is a cascade:
//!
//! 1. If the text itself is a JSON value (possibly inside a code fence, with
//!    trailing prose tolerated), take the `"prediction"` ids from an object,
//!    or the string elements of a bare array.
//! 2. Otherwise take the first bracketed/braced list of quoted tokens whose
//!    tokens all look like location identifiers. The shape gate keeps echoed
//!    stay lines (`['6 PM', 'Wednesday', …]`) and lists of non-identifiers
//!    (times, labels) from masquerading as predictions.
//! 3. Otherwise scan for identifier-shaped tokens (hex-like, 20–28 chars)
//!    anywhere in the text.
//!
//! Extraction is total: any input yields a (possibly empty) id list, never an
//! error. Classification is a separate step that needs the dataset
//! vocabulary: an empty list is unusable, an id outside the vocabulary marks
//! the output as hallucinated (the id keeps its rank — it simply can never
//! match a real target), otherwise the output is valid.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Rank lists are truncated to the contract's five entries.
pub const MAX_PREDICTIONS: usize = 5;

/// Three-way output classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Valid,
    EmptyUnusable,
    ContainsHallucination,
}

/// A parsed model answer for one instance/run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub instance_id: String,
    pub model: String,
    pub run_index: u32,
    /// Ranked ids, at most five, duplicates preserved.
    pub predicted_ids: Vec<String>,
    pub reason: Option<String>,
    pub classification: Classification,
    /// Distinct predicted ids absent from the vocabulary, in rank order.
    pub hallucinated_ids: Vec<String>,
}

/// Raw extraction outcome, before vocabulary checks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extraction {
    pub ids: Vec<String>,
    pub reason: Option<String>,
}

fn id_shape_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[0-9a-f]{20,28}$").unwrap())
}

fn id_scan_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b[0-9a-f]{20,28}\b").unwrap())
}

/// Heuristic for step (3) and the step-(2) gate: Foursquare-style venue ids
/// are lowercase hex, 20–28 characters.
pub fn looks_like_location_id(token: &str) -> bool {
    id_shape_re().is_match(token)
}

/// Pull ranked ids and an optional reason out of arbitrary model text.
pub fn extract(text: &str) -> Extraction {
    let mut extraction = run_cascade(text);
    extraction.ids.truncate(MAX_PREDICTIONS);
    extraction.ids = extraction
        .ids
        .into_iter()
        .map(|s| s.trim().to_string())
        .collect();
    if let Some(r) = &extraction.reason {
        let cleaned = clean_reason(r);
        extraction.reason = if cleaned.is_empty() {
            None
        } else {
            Some(cleaned)
        };
    }
    extraction
}

fn run_cascade(text: &str) -> Extraction {
    if let Some(found) = extract_from_json(text.trim()) {
        return found;
    }
    if let Some(fenced) = fenced_block(text) {
        if let Some(found) = extract_from_json(fenced.trim()) {
            return found;
        }
    }
    if let Some((ids, end)) = first_plausible_quoted_list(text) {
        let reason = reason_by_key(text).or_else(|| trailing_text(text, end));
        return Extraction { ids, reason };
    }
    let ids: Vec<String> = id_scan_re()
        .find_iter(text)
        .map(|m| m.as_str().to_string())
        .collect();
    if !ids.is_empty() {
        return Extraction {
            ids,
            reason: reason_by_key(text),
        };
    }
    Extraction::default()
}

/// Step 1: the text (or fenced block) parses as a JSON value from its first
/// character; trailing prose after the value is fine. Ids taken from a
/// `"prediction"` key or a bare string array are trusted as-is — a
/// well-formed answer is unambiguous, whatever the id alphabet.
fn extract_from_json(text: &str) -> Option<Extraction> {
    let mut stream = serde_json::Deserializer::from_str(text).into_iter::<serde_json::Value>();
    let value = stream.next()?.ok()?;
    let consumed = stream.byte_offset();
    let (ids, reason) = match &value {
        serde_json::Value::Object(map) => {
            let ids = map.get("prediction").map(json_ids).unwrap_or_default();
            let reason = map
                .get("reason")
                .and_then(|v| v.as_str())
                .map(|s| s.to_string());
            (ids, reason)
        }
        serde_json::Value::Array(_) => {
            // A bare array is weaker evidence than an explicit "prediction"
            // key, so its tokens must all pass the identifier-shape gate.
            let ids = json_ids(&value);
            if ids.iter().all(|id| looks_like_location_id(id)) {
                (ids, None)
            } else {
                (Vec::new(), None)
            }
        }
        _ => (Vec::new(), None),
    };
    if ids.is_empty() {
        return None;
    }
    let reason = reason
        .or_else(|| reason_by_key(text))
        .or_else(|| trailing_text(text, consumed));
    Some(Extraction { ids, reason })
}

fn json_ids(value: &serde_json::Value) -> Vec<String> {
    match value {
        serde_json::Value::Array(items) => items
            .iter()
            .filter_map(|v| v.as_str())
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        serde_json::Value::String(s) if !s.trim().is_empty() => vec![s.trim().to_string()],
        _ => Vec::new(),
    }
}

fn fenced_block(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let rest = &text[start + 3..];
    let body_start = rest.find('\n').map(|i| i + 1).unwrap_or_else(|| {
        // fence language tag without newline, e.g. ```json{...}
        rest.find(['{', '[']).unwrap_or(0)
    });
    let body = &rest[body_start..];
    let end = body.find("```")?;
    Some(&body[..end])
}

/// Step 2: scan for `[...]` / `{...}` groups holding only quoted tokens and
/// return the first whose tokens all pass the identifier-shape gate.
fn first_plausible_quoted_list(text: &str) -> Option<(Vec<String>, usize)> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let open = bytes[i];
        if open == b'[' || open == b'{' {
            if let Some((tokens, end)) = lex_quoted_group(text, i) {
                if !tokens.is_empty() && tokens.iter().all(|t| looks_like_location_id(t)) {
                    return Some((tokens, end));
                }
            }
        }
        i += 1;
    }
    None
}

/// Lex a group starting at `open_idx` as quoted tokens separated by commas;
/// returns the tokens and the byte offset just past the closing delimiter.
fn lex_quoted_group(text: &str, open_idx: usize) -> Option<(Vec<String>, usize)> {
    let bytes = text.as_bytes();
    let close = match bytes[open_idx] {
        b'[' => b']',
        b'{' => b'}',
        _ => return None,
    };
    let mut tokens = Vec::new();
    let mut i = open_idx + 1;
    loop {
        while i < bytes.len() && (bytes[i] as char).is_whitespace() {
            i += 1;
        }
        if i >= bytes.len() {
            return None;
        }
        let quote = bytes[i];
        if quote != b'\'' && quote != b'"' {
            return None;
        }
        i += 1;
        let token_start = i;
        while i < bytes.len() && bytes[i] != quote {
            i += 1;
        }
        if i >= bytes.len() {
            return None;
        }
        tokens.push(text[token_start..i].trim().to_string());
        i += 1;
        while i < bytes.len() && (bytes[i] as char).is_whitespace() {
            i += 1;
        }
        if i >= bytes.len() {
            return None;
        }
        match bytes[i] {
            b',' => i += 1,
            b if b == close => return Some((tokens, i + 1)),
            _ => return None,
        }
    }
}

/// Reason from a `"reason":`/`'reason':` key anywhere in the text; tolerates
/// a missing closing quote (runs to end of text).
fn reason_by_key(text: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r#"["']reason["']\s*:\s*"#).unwrap());
    let m = re.find(text)?;
    let rest = text[m.end()..].trim_start();
    let mut chars = rest.char_indices();
    let (_, first) = chars.next()?;
    if first == '"' || first == '\'' {
        let body = &rest[1..];
        match body.find(first) {
            Some(end) => Some(body[..end].to_string()),
            None => Some(body.to_string()),
        }
    } else {
        Some(rest.to_string())
    }
}

fn trailing_text(text: &str, from: usize) -> Option<String> {
    if from >= text.len() {
        return None;
    }
    let tail = clean_reason(&text[from..]);
    if tail.is_empty() {
        None
    } else {
        Some(tail)
    }
}

fn clean_reason(raw: &str) -> String {
    raw.trim()
        .trim_start_matches(|c: char| {
            matches!(c, '.' | ',' | ';' | ':' | ']' | '}' | '\'' | '"') || c.is_whitespace()
        })
        .trim_end_matches(|c: char| matches!(c, '"' | '\'' | '}' | '{') || c.is_whitespace())
        .trim()
        .to_string()
}

/// Classify extracted ids against the dataset vocabulary and assemble the
/// result record. `ids` must already be truncated (as [`extract`] does).
pub fn classify(
    extraction: &Extraction,
    vocabulary: &BTreeSet<String>,
    instance_id: &str,
    model: &str,
    run_index: u32,
) -> PredictionResult {
    let mut hallucinated: Vec<String> = Vec::new();
    for id in &extraction.ids {
        if !vocabulary.contains(id) && !hallucinated.iter().any(|h| h == id) {
            hallucinated.push(id.clone());
        }
    }
    let classification = if extraction.ids.is_empty() {
        Classification::EmptyUnusable
    } else if !hallucinated.is_empty() {
        Classification::ContainsHallucination
    } else {
        Classification::Valid
    };
    PredictionResult {
        instance_id: instance_id.to_string(),
        model: model.to_string(),
        run_index,
        predicted_ids: extraction.ids.clone(),
        reason: extraction.reason.clone(),
        classification,
        hallucinated_ids: hallucinated,
    }
}

/// Convenience: extract + classify.
pub fn parse_output(
    text: &str,
    vocabulary: &BTreeSet<String>,
    instance_id: &str,
    model: &str,
    run_index: u32,
) -> PredictionResult {
    let extraction = extract(text);
    classify(&extraction, vocabulary, instance_id, model, run_index)
}
