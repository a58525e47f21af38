//! Shared domain types: boxes, images, queries and clue sets.
//!
//! Everything here is an immutable value. Boxes are kept at full precision;
//! rounding only happens when a prompt is rendered.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("image `{0}` has a zero dimension")]
    ZeroDimensionImage(String),
    #[error("box coordinates must be finite, got {0:?}")]
    NonFinite([f64; 4]),
    #[error("box coordinates out of [0,1]: {0:?}")]
    OutOfRange([f64; 4]),
    #[error("inverted box {0:?} (need x1 <= x2 and y1 <= y2)")]
    InvertedBox([f64; 4]),
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error("option letters must be A, B, C, D in order without gaps, got {0:?}")]
    BadOptionLetters(Vec<char>),
    #[error("text clue content must not be empty")]
    EmptyClue,
    #[error("object group `{class}` declares count {count} but carries {crops} crops")]
    CountMismatch {
        class: String,
        count: usize,
        crops: usize,
    },
    #[error("object group `{0}` has no crops")]
    EmptyGroup(String),
    #[error("class `{0}` appears more than once in the clue set")]
    DuplicateClass(String),
    #[error("text clues present although the OCR agent did not run")]
    TextCluesWithoutAgent,
}

/// Axis-aligned rectangle in fractions of image width/height, corner format
/// `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct NormalizedBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl NormalizedBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, ModelError> {
        let raw = [x1, y1, x2, y2];
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite(raw));
        }
        if raw.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ModelError::OutOfRange(raw));
        }
        if x2 < x1 || y2 < y1 {
            return Err(ModelError::InvertedBox(raw));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub const FULL: NormalizedBox = NormalizedBox {
        x1: 0.0,
        y1: 0.0,
        x2: 1.0,
        y2: 1.0,
    };

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    /// Back to pixel coordinates of `image`.
    pub fn to_pixels(&self, image: &ImageRef) -> [f64; 4] {
        let (w, h) = (image.width as f64, image.height as f64);
        [self.x1 * w, self.y1 * h, self.x2 * w, self.y2 * h]
    }
}

impl TryFrom<[f64; 4]> for NormalizedBox {
    type Error = ModelError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        NormalizedBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<NormalizedBox> for [f64; 4] {
    fn from(b: NormalizedBox) -> Self {
        b.coords()
    }
}

/// Pixel rectangle of a crop inside its parent image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRegion {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

/// Reference to an image the backend or an agent can resolve. Crops carry the
/// pixel region they cut out of `source`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<CropRegion>,
}

impl ImageRef {
    pub fn new(
        id: impl Into<String>,
        width: u32,
        height: u32,
        source: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let id = id.into();
        if width == 0 || height == 0 {
            return Err(ModelError::ZeroDimensionImage(id));
        }
        Ok(Self {
            id,
            width,
            height,
            source: source.into(),
            region: None,
        })
    }
}

/// Map a detector/OCR pixel box onto the unit square of `image`.
///
/// Out-of-bounds coordinates are clamped and swapped corners are reordered,
/// so any finite input yields a valid box.
pub fn normalize_box(pixel_box: [f64; 4], image: &ImageRef) -> Result<NormalizedBox, ModelError> {
    if image.width == 0 || image.height == 0 {
        return Err(ModelError::ZeroDimensionImage(image.id.clone()));
    }
    if pixel_box.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite(pixel_box));
    }
    let (w, h) = (image.width as f64, image.height as f64);
    let fx = |v: f64| (v / w).clamp(0.0, 1.0);
    let fy = |v: f64| (v / h).clamp(0.0, 1.0);
    let (ax, bx) = (fx(pixel_box[0]), fx(pixel_box[2]));
    let (ay, by) = (fy(pixel_box[1]), fy(pixel_box[3]));
    NormalizedBox::new(ax.min(bx), ay.min(by), ax.max(bx), ay.max(by))
}

pub fn box_area_fraction(b: &NormalizedBox) -> f64 {
    b.width() * b.height()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceOption {
    pub letter: char,
    pub text: String,
}

pub const OPTION_LETTERS: [char; 4] = ['A', 'B', 'C', 'D'];

/// Image plus text query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub image: ImageRef,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_format_hint: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<ChoiceOption>,
}

impl Query {
    pub fn new(
        image: ImageRef,
        question: impl Into<String>,
        answer_format_hint: Option<String>,
        options: Vec<ChoiceOption>,
    ) -> Result<Self, ModelError> {
        let q = Self {
            image,
            question: question.into(),
            answer_format_hint,
            options,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.question.trim().is_empty() {
            return Err(ModelError::EmptyQuestion);
        }
        let letters: Vec<char> = self.options.iter().map(|o| o.letter).collect();
        if letters.len() > OPTION_LETTERS.len() || letters[..] != OPTION_LETTERS[..letters.len()] {
            return Err(ModelError::BadOptionLetters(letters));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextClue {
    pub content: String,
    pub location: NormalizedBox,
}

impl TextClue {
    pub fn new(content: impl Into<String>, location: NormalizedBox) -> Result<Self, ModelError> {
        let content = content.into();
        if content.is_empty() {
            return Err(ModelError::EmptyClue);
        }
        Ok(Self { content, location })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectCrop {
    pub crop: ImageRef,
    pub location: NormalizedBox,
    pub score: f64,
}

/// All surviving detections of one requested class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectClueGroup {
    pub class_name: String,
    pub count: usize,
    pub crops: Vec<ObjectCrop>,
}

impl ObjectClueGroup {
    pub fn new(class_name: impl Into<String>, crops: Vec<ObjectCrop>) -> Result<Self, ModelError> {
        let class_name = class_name.into();
        if crops.is_empty() {
            return Err(ModelError::EmptyGroup(class_name));
        }
        Ok(Self {
            class_name,
            count: crops.len(),
            crops,
        })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.crops.is_empty() {
            return Err(ModelError::EmptyGroup(self.class_name.clone()));
        }
        if self.count != self.crops.len() {
            return Err(ModelError::CountMismatch {
                class: self.class_name.clone(),
                count: self.count,
                crops: self.crops.len(),
            });
        }
        Ok(())
    }
}

/// Grounded evidence gathered between the two rounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClueSet {
    pub object_groups: Vec<ObjectClueGroup>,
    pub undetected_classes: Vec<String>,
    pub text_clues: Vec<TextClue>,
    pub text_agent_ran: bool,
}

impl ClueSet {
    /// Total number of object crops (m).
    pub fn object_count(&self) -> usize {
        self.object_groups.iter().map(|g| g.count).sum()
    }

    pub fn grounding_ran(&self) -> bool {
        !self.object_groups.is_empty() || !self.undetected_classes.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        !self.grounding_ran() && !self.text_agent_ran
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = std::collections::BTreeSet::new();
        for g in &self.object_groups {
            g.validate()?;
            if !seen.insert(g.class_name.to_lowercase()) {
                return Err(ModelError::DuplicateClass(g.class_name.clone()));
            }
        }
        for c in &self.undetected_classes {
            if !seen.insert(c.to_lowercase()) {
                return Err(ModelError::DuplicateClass(c.clone()));
            }
        }
        if !self.text_agent_ran && !self.text_clues.is_empty() {
            return Err(ModelError::TextCluesWithoutAgent);
        }
        Ok(())
    }
}
