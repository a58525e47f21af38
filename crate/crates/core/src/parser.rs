//! Round-one output grammar: a direct answer, or a refusal that names the
//! missing objects (and/or "text in the image").

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const REFUSAL_PREFIX: &str = "Sorry, I cannot answer the question. Some visual information about the following objects is missing or unclear:";

/// Item that routes to the OCR agent instead of the grounding agent.
pub const TEXT_SENTINEL: &str = "text in the image";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("refusal names no objects and does not ask for text")]
    EmptyItemList,
    #[error("invalid class name {0:?}")]
    InvalidClassName(String),
    #[error("duplicate class name {0:?}")]
    DuplicateClass(String),
}

/// Which agents the model asked for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentCallRequest {
    object_classes: Vec<String>,
    wants_text: bool,
}

impl AgentCallRequest {
    pub fn new(object_classes: Vec<String>, wants_text: bool) -> Result<Self, ParseError> {
        let mut seen: Vec<String> = Vec::with_capacity(object_classes.len());
        for class in &object_classes {
            if class.is_empty()
                || class.trim() != class
                || class.contains(',')
                || class.eq_ignore_ascii_case(TEXT_SENTINEL)
            {
                return Err(ParseError::InvalidClassName(class.clone()));
            }
            let key = class.to_lowercase();
            if seen.contains(&key) {
                return Err(ParseError::DuplicateClass(class.clone()));
            }
            seen.push(key);
        }
        if object_classes.is_empty() && !wants_text {
            return Err(ParseError::EmptyItemList);
        }
        Ok(Self {
            object_classes,
            wants_text,
        })
    }

    pub fn objects(classes: &[&str]) -> Result<Self, ParseError> {
        Self::new(classes.iter().map(|c| c.to_string()).collect(), false)
    }

    pub fn text() -> Self {
        Self {
            object_classes: Vec::new(),
            wants_text: true,
        }
    }

    pub fn object_classes(&self) -> &[String] {
        &self.object_classes
    }

    pub fn wants_text(&self) -> bool {
        self.wants_text
    }

    pub fn wants_grounding(&self) -> bool {
        !self.object_classes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RoundOneOutcome {
    Direct { answer: String },
    Call { request: AgentCallRequest },
}

/// Classify the backend's full round-one message.
///
/// Only a refusal at the very start counts; prefix matching ignores ASCII case
/// and treats any whitespace run as a single space.
pub fn classify_round_one(raw: &str) -> Result<RoundOneOutcome, ParseError> {
    let trimmed = raw.trim();
    match match_prefix(trimmed) {
        Some(rest) => {
            let (object_classes, wants_text) = parse_item_list(rest)?;
            Ok(RoundOneOutcome::Call {
                request: AgentCallRequest {
                    object_classes,
                    wants_text,
                },
            })
        }
        None => Ok(RoundOneOutcome::Direct {
            answer: trimmed.to_string(),
        }),
    }
}

/// Returns the remainder of `text` after the refusal prefix, if it matches.
fn match_prefix(text: &str) -> Option<&str> {
    let mut rest = text;
    for expected in REFUSAL_PREFIX.chars() {
        if expected == ' ' {
            let after = rest.trim_start();
            if after.len() == rest.len() {
                return None;
            }
            rest = after;
        } else {
            let mut chars = rest.chars();
            let got = chars.next()?;
            if !got.eq_ignore_ascii_case(&expected) {
                return None;
            }
            rest = chars.as_str();
        }
    }
    Some(rest)
}

/// Split the text after the prefix into object classes and the text flag.
pub fn parse_item_list(items_text: &str) -> Result<(Vec<String>, bool), ParseError> {
    let mut items: Vec<&str> = items_text.split(',').map(str::trim).collect();
    if let Some(last) = items.last_mut() {
        if let Some(stripped) = last.strip_suffix('.') {
            *last = stripped.trim_end();
        }
    }

    let mut classes: Vec<String> = Vec::new();
    let mut wants_text = false;
    for item in items {
        if item.is_empty() {
            continue;
        }
        if item.eq_ignore_ascii_case(TEXT_SENTINEL) {
            wants_text = true;
            continue;
        }
        if !classes
            .iter()
            .any(|c| c.to_lowercase() == item.to_lowercase())
        {
            classes.push(item.to_string());
        }
    }
    if classes.is_empty() && !wants_text {
        return Err(ParseError::EmptyItemList);
    }
    Ok((classes, wants_text))
}

/// Inverse of [`classify_round_one`] for a call: the exact refusal sentence.
pub fn render_refusal(request: &AgentCallRequest) -> String {
    let mut items: Vec<&str> = request.object_classes.iter().map(String::as_str).collect();
    if request.wants_text {
        items.push(TEXT_SENTINEL);
    }
    format!("{REFUSAL_PREFIX} {}.", items.join(", "))
}
