//! Tolerant extraction of the JSON objects the templates ask for.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::text::first_sentences;

use super::MAX_DIRECTION_SENTENCES;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("no JSON object found")]
    NoJsonObject,
    #[error("invalid JSON: {0}")]
    InvalidJson(String),
    #[error("missing key {0:?}")]
    MissingKey(&'static str),
    #[error("invalid value for {key:?}: {reason}")]
    InvalidValue { key: &'static str, reason: String },
    #[error("choice {idx} outside 1..={candidates}")]
    InvalidChoice { idx: i64, candidates: usize },
}

/// A model response that could not be turned into the expected value.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub raw: String,
}

impl ParseError {
    fn new(kind: ParseErrorKind, raw: &str) -> Self {
        Self {
            kind,
            raw: raw.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionTriple {
    pub short: String,
    pub medium: String,
    pub long: String,
}

impl DescriptionTriple {
    /// The object shape the description templates request.
    pub fn to_template_json(&self) -> String {
        serde_json::json!({
            "long_description": self.long,
            "medium_description": self.medium,
            "short_description": self.short,
        })
        .to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DestinationDetail {
    pub path_summary: String,
    pub place_summary: String,
    pub mobility_cues: String,
    pub sidewalk: String,
    pub signage_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionChoice {
    pub idx: usize,
    pub reason: String,
}

fn strip_fences(raw: &str) -> String {
    raw.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Top-level `{...}` spans whose braces balance outside of string literals.
fn balanced_objects(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = None;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' if depth > 0 => in_string = true,
            '{' => {
                if depth == 0 {
                    start = Some(i);
                }
                depth += 1;
            }
            '}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    if let Some(st) = start.take() {
                        out.push(&s[st..=i]);
                    }
                }
            }
            _ => {}
        }
    }
    out
}

fn is_open_quote(c: char) -> bool {
    matches!(c, '"' | '“' | '”' | '„')
}

/// One pass of common repairs, applied outside and inside string literals as
/// appropriate:
/// curly double quotes used as delimiters become `"`; literal line breaks
/// inside strings collapse to one space; trailing commas before `}`/`]` are
/// dropped; a missing comma between a string value and the next key is added.
fn repair(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    // closing delimiters of the current string, if inside one
    let mut in_string: Option<bool> = None; // Some(curly)
    let mut last_structural = ' ';
    while i < chars.len() {
        let c = chars[i];
        if let Some(curly) = in_string {
            match c {
                '\\' if i + 1 < chars.len() => {
                    out.push(c);
                    out.push(chars[i + 1]);
                    i += 2;
                    continue;
                }
                '"' if !curly => in_string = None,
                '”' | '“' if curly && closes_here(&chars, i + 1) => {
                    out.push('"');
                    in_string = None;
                    i += 1;
                    after_string(&chars, &mut i, &mut out, last_structural);
                    continue;
                }
                '"' => {
                    out.push_str("\\\"");
                    i += 1;
                    continue;
                }
                '\n' | '\r' => {
                    while out.ends_with(' ') {
                        out.pop();
                    }
                    out.push(' ');
                    while i + 1 < chars.len() && chars[i + 1].is_whitespace() {
                        i += 1;
                    }
                    i += 1;
                    continue;
                }
                c if c.is_control() => {
                    out.push(' ');
                    i += 1;
                    continue;
                }
                _ => {}
            }
            out.push(c);
            i += 1;
            if in_string.is_none() {
                after_string(&chars, &mut i, &mut out, last_structural);
            }
            continue;
        }
        match c {
            c if is_open_quote(c) => {
                in_string = Some(c != '"');
                out.push('"');
            }
            ',' => {
                let mut j = i + 1;
                while j < chars.len() && chars[j].is_whitespace() {
                    j += 1;
                }
                if !matches!(chars.get(j), Some('}') | Some(']')) {
                    out.push(',');
                    last_structural = ',';
                }
            }
            '{' | '}' | '[' | ']' | ':' => {
                out.push(c);
                last_structural = c;
            }
            _ => out.push(c),
        }
        i += 1;
    }
    out
}

/// Whether a curly quote at `i - 1` can end a string: only when the next
/// token is JSON structure.
fn closes_here(chars: &[char], mut i: usize) -> bool {
    while i < chars.len() && chars[i].is_whitespace() {
        i += 1;
    }
    match chars.get(i) {
        None => true,
        Some(&c) => matches!(c, ':' | ',' | '}' | ']') || is_open_quote(c),
    }
}

/// After a string that was an object value, inserts a comma when the next
/// token is another quoted key.
fn after_string(chars: &[char], i: &mut usize, out: &mut String, last_structural: char) {
    if last_structural != ':' {
        return;
    }
    let mut j = *i;
    while j < chars.len() && chars[j].is_whitespace() {
        j += 1;
    }
    if chars.get(j).copied().is_some_and(is_open_quote) {
        out.push(',');
    }
}

fn try_objects(s: &str) -> Result<Map<String, Value>, ParseErrorKind> {
    let candidates = balanced_objects(s);
    if candidates.is_empty() {
        return Err(ParseErrorKind::NoJsonObject);
    }
    let mut first_err = None;
    for c in candidates {
        match serde_json::from_str::<Value>(c) {
            Ok(Value::Object(m)) => return Ok(m),
            Ok(_) => {}
            Err(e) => {
                first_err.get_or_insert_with(|| e.to_string());
            }
        }
    }
    Err(ParseErrorKind::InvalidJson(
        first_err.unwrap_or_else(|| "not an object".to_string()),
    ))
}

/// Finds the JSON object in a conversational model reply.
pub fn extract_object(raw: &str) -> Result<Map<String, Value>, ParseError> {
    let stripped = strip_fences(raw);
    let first = match try_objects(&stripped) {
        Ok(m) => return Ok(m),
        Err(e) => e,
    };
    try_objects(&repair(&stripped)).map_err(|second| {
        // report the more informative of the two failures
        let kind = match (&first, second) {
            (ParseErrorKind::NoJsonObject, s) => s,
            (f, _) => f.clone(),
        };
        ParseError::new(kind, raw)
    })
}

fn text_field(
    map: &Map<String, Value>,
    key: &'static str,
    raw: &str,
    allow_empty: bool,
) -> Result<String, ParseError> {
    let s = match map.get(key) {
        None | Some(Value::Null) => {
            return Err(ParseError::new(ParseErrorKind::MissingKey(key), raw))
        }
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(Value::Bool(b)) => b.to_string(),
        Some(other) => {
            return Err(ParseError::new(
                ParseErrorKind::InvalidValue {
                    key,
                    reason: format!("expected text, got {other}"),
                },
                raw,
            ))
        }
    };
    if !allow_empty && s.trim().is_empty() {
        return Err(ParseError::new(
            ParseErrorKind::InvalidValue {
                key,
                reason: "empty".to_string(),
            },
            raw,
        ));
    }
    Ok(s)
}

pub fn parse_triple(raw: &str) -> Result<DescriptionTriple, ParseError> {
    let m = extract_object(raw)?;
    Ok(DescriptionTriple {
        long: text_field(&m, "long_description", raw, false)?,
        medium: text_field(&m, "medium_description", raw, false)?,
        short: text_field(&m, "short_description", raw, false)?,
    })
}

pub fn parse_destination(raw: &str) -> Result<DestinationDetail, ParseError> {
    let m = extract_object(raw)?;
    let signage_text = match m.get("text") {
        Some(_) => text_field(&m, "text", raw, true)?,
        None if m.contains_key("signage_text") => text_field(&m, "signage_text", raw, true)?,
        None => return Err(ParseError::new(ParseErrorKind::MissingKey("text"), raw)),
    };
    Ok(DestinationDetail {
        path_summary: text_field(&m, "path_summary", raw, false)?,
        place_summary: text_field(&m, "place_summary", raw, false)?,
        mobility_cues: text_field(&m, "mobility_cues", raw, false)?,
        sidewalk: text_field(&m, "sidewalk", raw, false)?,
        signage_text,
    })
}

/// Returns the description body, cut to at most three sentences.
pub fn parse_direction(raw: &str) -> Result<String, ParseError> {
    let m = extract_object(raw)?;
    let body = text_field(&m, "description", raw, false)?;
    Ok(first_sentences(&body, MAX_DIRECTION_SENTENCES))
}

fn choice_index(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n
            .as_i64()
            .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0 && f.abs() < 1e15).map(|f| f as i64)),
        Value::String(s) => {
            let s = s.trim();
            let s = if s.len() >= 4 && s[..4].eq_ignore_ascii_case("road") {
                s[4..].trim_start()
            } else {
                s
            };
            s.parse().ok()
        }
        _ => None,
    }
}

pub fn parse_choice(raw: &str, candidate_count: usize) -> Result<DirectionChoice, ParseError> {
    let m = extract_object(raw)?;
    let v = m
        .get("idx")
        .ok_or_else(|| ParseError::new(ParseErrorKind::MissingKey("idx"), raw))?;
    let idx = choice_index(v).ok_or_else(|| {
        ParseError::new(
            ParseErrorKind::InvalidValue {
                key: "idx",
                reason: format!("not an integer: {v}"),
            },
            raw,
        )
    })?;
    if idx < 1 || idx as u64 > candidate_count as u64 {
        return Err(ParseError::new(
            ParseErrorKind::InvalidChoice {
                idx,
                candidates: candidate_count,
            },
            raw,
        ));
    }
    let reason = match m.get("reason") {
        Some(_) => text_field(&m, "reason", raw, true)?,
        None => String::new(),
    };
    Ok(DirectionChoice {
        idx: idx as usize,
        reason,
    })
}

pub const MAX_KEYWORDS: usize = 6;

/// Keyword labels, de-duplicated ignoring case and capped at six.
pub fn parse_keywords(raw: &str) -> Result<Vec<String>, ParseError> {
    let m = extract_object(raw)?;
    let items: Vec<String> = match m.get("keywords") {
        None | Some(Value::Null) => {
            return Err(ParseError::new(ParseErrorKind::MissingKey("keywords"), raw))
        }
        Some(Value::Array(a)) => a
            .iter()
            .filter_map(|v| v.as_str().map(str::to_string))
            .collect(),
        Some(Value::String(s)) => s.split(',').map(str::to_string).collect(),
        Some(other) => {
            return Err(ParseError::new(
                ParseErrorKind::InvalidValue {
                    key: "keywords",
                    reason: format!("expected a list, got {other}"),
                },
                raw,
            ))
        }
    };
    let mut set = super::KeywordSet::new();
    set.extend(items);
    let mut out: Vec<String> = set.into();
    out.truncate(MAX_KEYWORDS);
    if out.is_empty() {
        return Err(ParseError::new(
            ParseErrorKind::InvalidValue {
                key: "keywords",
                reason: "no labels".to_string(),
            },
            raw,
        ));
    }
    Ok(out)
}

pub fn parse_place_type(raw: &str) -> Result<String, ParseError> {
    let m = extract_object(raw)?;
    Ok(text_field(&m, "place_type", raw, false)?.trim().to_string())
}
