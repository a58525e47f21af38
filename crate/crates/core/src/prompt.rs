//! Round-one and round-two prompt rendering.
//!
//! A prompt is an ordered list of segments. Flattened to text, segments are
//! joined by a blank line, the original image shows as `<image>` and object
//! crops are bound positionally to the `<object>` placeholders of the text.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::GroundingResult;
use crate::model::{ClueSet, ImageRef, ModelError, NormalizedBox, Query, TextClue};

pub const CLUE_HEADER: &str = "Additional visual information to focus on:";
pub const TEXT_LEAD: &str = "Text in the image: ";
pub const NO_TEXT_FALLBACK: &str = "Please focus on providing an answer to the question without considering any challenges related to the clarity or presence of text in the image.";
pub const IMAGE_TOKEN: &str = "<image>";
pub const OBJECT_TOKEN: &str = "<object>";
pub const ABSENT_SUFFIX: &str = " not existent in the image";
const SEGMENT_SEPARATOR: &str = "\n\n";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComposeError {
    #[error("no agent ran, so there is nothing to ground a second round on")]
    NoCluesRequested,
    #[error("invalid clue set: {0}")]
    InvalidClues(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposerOptions {
    pub include_positions: bool,
}

impl Default for ComposerOptions {
    fn default() -> Self {
        Self {
            include_positions: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    ImageSlot(ImageRef),
    ObjectSlot(ImageRef),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptDocument {
    pub segments: Vec<Segment>,
}

impl PromptDocument {
    pub fn object_slots(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| matches!(s, Segment::ObjectSlot(_)))
            .count()
    }

    pub fn text_chars(&self) -> usize {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Text(t) => t.chars().count(),
                _ => 0,
            })
            .sum()
    }

    pub fn placeholder_count(&self) -> usize {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Text(t) => t.matches(OBJECT_TOKEN).count(),
                _ => 0,
            })
            .sum()
    }

    /// One leading image slot, no other image slots, balanced placeholders.
    pub fn is_well_formed(&self) -> bool {
        matches!(self.segments.first(), Some(Segment::ImageSlot(_)))
            && self
                .segments
                .iter()
                .skip(1)
                .all(|s| !matches!(s, Segment::ImageSlot(_)))
            && self.placeholder_count() == self.object_slots()
    }

    pub fn record(&self) -> PromptRecord {
        PromptRecord {
            segments: self
                .segments
                .iter()
                .map(|s| match s {
                    Segment::ImageSlot(img) => SegmentRecord::Image { id: img.id.clone() },
                    Segment::ObjectSlot(img) => SegmentRecord::Object { id: img.id.clone() },
                    Segment::Text(t) => SegmentRecord::Text { text: t.clone() },
                })
                .collect(),
        }
    }

    pub fn render_text(&self) -> String {
        self.record().render_text()
    }
}

impl Serialize for PromptDocument {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.record().serialize(serializer)
    }
}

/// Trace form of a segment: images by id only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SegmentRecord {
    Image { id: String },
    Object { id: String },
    Text { text: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptRecord {
    pub segments: Vec<SegmentRecord>,
}

impl PromptRecord {
    /// Flat prompt text: `<image>` for the original image, crops omitted
    /// (their `<object>` placeholders stay), blank line between segments.
    pub fn render_text(&self) -> String {
        self.segments
            .iter()
            .filter_map(|s| match s {
                SegmentRecord::Image { .. } => Some(IMAGE_TOKEN),
                SegmentRecord::Object { .. } => None,
                SegmentRecord::Text { text } => Some(text.as_str()),
            })
            .collect::<Vec<_>>()
            .join(SEGMENT_SEPARATOR)
    }
}

/// Render one coordinate: rounded half away from zero to 3 decimals, then one
/// trailing zero dropped if present (never below 2 decimals).
///
/// Rounding works on the shortest decimal that round-trips to `v`, so a value
/// written as 0.0015 rounds up even though its binary value is a hair below.
fn format_coord(v: f64) -> String {
    let shortest = v.abs().to_string();
    let (int_part, frac_part) = shortest.split_once('.').unwrap_or((&shortest, ""));
    let digits: Vec<u64> = frac_part
        .bytes()
        .chain(std::iter::repeat(b'0'))
        .take(4)
        .map(|b| u64::from(b - b'0'))
        .collect();
    let mut thousandths: u64 =
        int_part.parse::<u64>().unwrap_or(0) * 1000 + digits[0] * 100 + digits[1] * 10 + digits[2];
    if digits[3] >= 5 {
        thousandths += 1;
    }
    let sign = if v < 0.0 && thousandths > 0 { "-" } else { "" };
    let mut s = format!("{sign}{}.{:03}", thousandths / 1000, thousandths % 1000);
    if s.ends_with('0') {
        s.pop();
    }
    s
}

pub fn format_location(b: &NormalizedBox) -> String {
    let parts: Vec<String> = b.coords().iter().map(|v| format_coord(*v)).collect();
    format!("[{}]", parts.join(", "))
}

/// The grounding clue block and the crops bound to its placeholders, in order.
pub fn format_object_block(
    result: &GroundingResult,
    opts: &ComposerOptions,
) -> (String, Vec<ImageRef>) {
    let mut lines = vec![CLUE_HEADER.to_string()];
    let mut crops = Vec::new();
    for group in &result.groups {
        let name = if group.count > 1 {
            format!("{}(s)", group.class_name)
        } else {
            group.class_name.clone()
        };
        let placeholders = vec![OBJECT_TOKEN; group.crops.len()].join(", ");
        let mut line = format!("{} {name} {placeholders}", group.count);
        if opts.include_positions {
            let locs: Vec<String> = group
                .crops
                .iter()
                .map(|c| format_location(&c.location))
                .collect();
            line.push_str(" at location ");
            line.push_str(&locs.join(", "));
        }
        lines.push(line);
        crops.extend(group.crops.iter().map(|c| c.crop.clone()));
    }
    for class in &result.undetected_classes {
        lines.push(format!("{class}{ABSENT_SUFFIX}"));
    }
    (lines.join("\n"), crops)
}

fn text_block_body(clues: &[TextClue], opts: &ComposerOptions) -> String {
    if clues.is_empty() {
        return NO_TEXT_FALLBACK.to_string();
    }
    let entries: Vec<String> = clues
        .iter()
        .map(|c| {
            if opts.include_positions {
                format!(
                    "'{}' at location {}",
                    c.content,
                    format_location(&c.location)
                )
            } else {
                format!("'{}'", c.content)
            }
        })
        .collect();
    format!("{TEXT_LEAD}{}.", entries.join("; "))
}

/// The OCR clue block, or the no-text fallback when `clues` is empty.
pub fn format_text_block(clues: &[TextClue], opts: &ComposerOptions) -> String {
    format!("{CLUE_HEADER}\n{}", text_block_body(clues, opts))
}

/// Question line(s): question, inline options, then the format hint.
pub fn format_question(query: &Query) -> String {
    let mut text = query.question.clone();
    for opt in &query.options {
        text.push_str(&format!(" {}. {}", opt.letter, opt.text));
    }
    if let Some(hint) = query
        .answer_format_hint
        .as_deref()
        .filter(|h| !h.is_empty())
    {
        text.push('\n');
        text.push_str(hint);
    }
    text
}

pub fn compose_round_one(query: &Query) -> PromptDocument {
    PromptDocument {
        segments: vec![
            Segment::ImageSlot(query.image.clone()),
            Segment::Text(format_question(query)),
        ],
    }
}

/// Grounded second-round prompt. Grounding clues come first; when both agents
/// ran the OCR block continues under the same header.
pub fn compose_round_two(
    query: &Query,
    clues: &ClueSet,
    opts: &ComposerOptions,
) -> Result<PromptDocument, ComposeError> {
    if clues.is_empty() {
        return Err(ComposeError::NoCluesRequested);
    }
    clues.validate()?;

    let mut segments = vec![Segment::ImageSlot(query.image.clone())];
    let grounding = clues.grounding_ran();
    if grounding {
        let result = GroundingResult {
            groups: clues.object_groups.clone(),
            undetected_classes: clues.undetected_classes.clone(),
        };
        let (block, crops) = format_object_block(&result, opts);
        segments.push(Segment::Text(block));
        segments.extend(crops.into_iter().map(Segment::ObjectSlot));
    }
    if clues.text_agent_ran {
        let block = if grounding {
            text_block_body(&clues.text_clues, opts)
        } else {
            format_text_block(&clues.text_clues, opts)
        };
        segments.push(Segment::Text(block));
    }
    segments.push(Segment::Text(format_question(query)));
    Ok(PromptDocument { segments })
}
