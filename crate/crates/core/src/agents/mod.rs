//! Clue-producing agents (grounding and OCR) behind one contract.
//!
//! Services speak pixel boxes; everything returned from this module is
//! normalized, thresholded, grouped per requested class and capped.

mod crop;
mod fixture;
mod http;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    box_area_fraction, normalize_box, ImageRef, ModelError, NormalizedBox, ObjectClueGroup,
    ObjectCrop, TextClue,
};

pub use crop::{crop_ref, DEGENERATE_AREA};
pub use fixture::{load_fixture_agent, FixtureAgent, FixtureParseError, FixtureRecord};
pub use http::HttpAgent;

pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.30;
pub const DEFAULT_MAX_PER_CLASS: usize = 5;
pub const DEFAULT_AGENT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("agent unavailable for image `{image_id}`: {reason}")]
    AgentUnavailable { image_id: String, reason: String },
    #[error("endpoint is a {actual} agent, {expected} required")]
    WrongKind {
        expected: AgentKind,
        actual: AgentKind,
    },
    #[error("grounding requires at least one class")]
    NoClasses,
    #[error("box {0:?} is too small to crop")]
    DegenerateBox([f64; 4]),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Grounding,
    Ocr,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Grounding => "grounding",
            AgentKind::Ocr => "ocr",
        })
    }
}

/// One detection as it comes over the wire (pixel coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDetection {
    pub class: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub score: f64,
}

/// One OCR line as it comes over the wire (pixel coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawText {
    pub content: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

/// A transport able to answer agent requests. Implementations must be safe to
/// share between sample workers.
pub trait AgentService: Send + Sync {
    fn detect(
        &self,
        image: &ImageRef,
        classes: &[String],
        threshold: f64,
        timeout_ms: u64,
    ) -> Result<Vec<RawDetection>, AgentError>;

    fn read_text(&self, image: &ImageRef, timeout_ms: u64) -> Result<Vec<RawText>, AgentError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    Remote(String),
    Fixture(PathBuf),
    InProcess(String),
}

#[derive(Clone)]
pub struct AgentEndpoint {
    pub kind: AgentKind,
    pub transport: Transport,
    pub timeout_ms: u64,
    pub score_threshold: f64,
    pub max_per_class: usize,
    service: Arc<dyn AgentService>,
}

impl fmt::Debug for AgentEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentEndpoint")
            .field("kind", &self.kind)
            .field("transport", &self.transport)
            .field("timeout_ms", &self.timeout_ms)
            .field("score_threshold", &self.score_threshold)
            .field("max_per_class", &self.max_per_class)
            .finish()
    }
}

impl AgentEndpoint {
    pub fn new(kind: AgentKind, transport: Transport, service: Arc<dyn AgentService>) -> Self {
        Self {
            kind,
            transport,
            timeout_ms: DEFAULT_AGENT_TIMEOUT_MS,
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            max_per_class: DEFAULT_MAX_PER_CLASS,
            service,
        }
    }

    /// Agent reached over JSON-over-HTTP at `url`.
    pub fn remote(kind: AgentKind, url: impl Into<String>) -> Self {
        let url = url.into();
        let service = Arc::new(HttpAgent::new(url.clone()));
        Self::new(kind, Transport::Remote(url), service)
    }

    pub fn with_timeout_ms(mut self, timeout_ms: u64) -> Self {
        assert!(timeout_ms > 0, "agent timeout must be positive");
        self.timeout_ms = timeout_ms;
        self
    }

    pub fn with_score_threshold(mut self, threshold: f64) -> Self {
        self.score_threshold = threshold;
        self
    }

    pub fn with_max_per_class(mut self, cap: usize) -> Self {
        self.max_per_class = cap;
        self
    }

    fn expect_kind(&self, expected: AgentKind) -> Result<(), AgentError> {
        if self.kind != expected {
            return Err(AgentError::WrongKind {
                expected,
                actual: self.kind,
            });
        }
        Ok(())
    }
}

/// A normalized, scored detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_name: String,
    #[serde(rename = "box")]
    pub bbox: NormalizedBox,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundingResult {
    pub groups: Vec<ObjectClueGroup>,
    pub undetected_classes: Vec<String>,
}

impl GroundingResult {
    /// Total crops (m).
    pub fn object_count(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }

    /// Everything requested, for all classes absent from the image.
    pub fn all_undetected(classes: &[String]) -> Self {
        Self {
            groups: Vec::new(),
            undetected_classes: classes.to_vec(),
        }
    }
}

/// Non-fatal oddities seen while grouping an agent reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AgentWarning {
    UnknownClassEcho { class: String },
    InvalidScore { class: String, score: f64 },
    DegenerateBox { class: String, bbox: [f64; 4] },
    BadBox { detail: String },
}

impl fmt::Display for AgentWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentWarning::UnknownClassEcho { class } => {
                write!(f, "agent returned unrequested class `{class}`; dropped")
            }
            AgentWarning::InvalidScore { class, score } => {
                write!(
                    f,
                    "detection of `{class}` has score {score} outside [0,1]; dropped"
                )
            }
            AgentWarning::DegenerateBox { class, bbox } => {
                write!(
                    f,
                    "detection of `{class}` at {bbox:?} is too small to crop; dropped"
                )
            }
            AgentWarning::BadBox { detail } => write!(f, "unusable box: {detail}"),
        }
    }
}

/// Stable order within a class: score descending, then left edge ascending.
fn detection_order(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.bbox.x1().total_cmp(&b.bbox.x1()))
        .then(a.bbox.y1().total_cmp(&b.bbox.y1()))
        .then(a.bbox.x2().total_cmp(&b.bbox.x2()))
        .then(a.bbox.y2().total_cmp(&b.bbox.y2()))
}

/// Group already-normalized detections by requested class.
///
/// Keeps detections with `score >= threshold`, sorts each class, truncates to
/// `max_per_class` and crops every survivor. Requested classes without
/// survivors are reported as undetected, in request order.
pub fn group_detections(
    image: &ImageRef,
    classes: &[String],
    detections: Vec<Detection>,
    threshold: f64,
    max_per_class: usize,
) -> (GroundingResult, Vec<AgentWarning>) {
    let mut warnings = Vec::new();
    let mut buckets: Vec<Vec<Detection>> = vec![Vec::new(); classes.len()];
    for det in detections {
        if !(0.0..=1.0).contains(&det.score) {
            warnings.push(AgentWarning::InvalidScore {
                class: det.class_name,
                score: det.score,
            });
            continue;
        }
        let Some(slot) = classes
            .iter()
            .position(|c| c.trim().eq_ignore_ascii_case(det.class_name.trim()))
        else {
            warnings.push(AgentWarning::UnknownClassEcho {
                class: det.class_name,
            });
            continue;
        };
        if det.score < threshold {
            continue;
        }
        if box_area_fraction(&det.bbox) < DEGENERATE_AREA {
            warnings.push(AgentWarning::DegenerateBox {
                class: det.class_name,
                bbox: det.bbox.coords(),
            });
            continue;
        }
        buckets[slot].push(det);
    }

    let mut result = GroundingResult::default();
    for (class, mut dets) in classes.iter().zip(buckets) {
        dets.sort_by(detection_order);
        dets.truncate(max_per_class);
        let crops: Vec<ObjectCrop> = dets
            .into_iter()
            .filter_map(|d| match crop_ref(image, &d.bbox) {
                Ok(crop) => Some(ObjectCrop {
                    crop,
                    location: d.bbox,
                    score: d.score,
                }),
                Err(_) => None,
            })
            .collect();
        match ObjectClueGroup::new(class.clone(), crops) {
            Ok(group) => result.groups.push(group),
            Err(_) => result.undetected_classes.push(class.clone()),
        }
    }
    (result, warnings)
}

/// Ask the grounding agent for `classes` on `image`.
pub fn ground_objects(
    image: &ImageRef,
    classes: &[String],
    endpoint: &AgentEndpoint,
) -> Result<(GroundingResult, Vec<AgentWarning>), AgentError> {
    endpoint.expect_kind(AgentKind::Grounding)?;
    if classes.is_empty() {
        return Err(AgentError::NoClasses);
    }
    let raw = endpoint.service.detect(
        image,
        classes,
        endpoint.score_threshold,
        endpoint.timeout_ms,
    )?;
    let mut warnings = Vec::new();
    let mut detections = Vec::with_capacity(raw.len());
    for r in raw {
        match normalize_box(r.bbox, image) {
            Ok(bbox) => detections.push(Detection {
                class_name: r.class,
                bbox,
                score: r.score,
            }),
            Err(e) => warnings.push(AgentWarning::BadBox {
                detail: e.to_string(),
            }),
        }
    }
    let (result, more) = group_detections(
        image,
        classes,
        detections,
        endpoint.score_threshold,
        endpoint.max_per_class,
    );
    warnings.extend(more);
    Ok((result, warnings))
}

/// Ask the OCR agent for all text on `image`, in the agent's reading order.
pub fn ocr_texts(
    image: &ImageRef,
    endpoint: &AgentEndpoint,
) -> Result<(Vec<TextClue>, Vec<AgentWarning>), AgentError> {
    endpoint.expect_kind(AgentKind::Ocr)?;
    let raw = endpoint.service.read_text(image, endpoint.timeout_ms)?;
    let mut warnings = Vec::new();
    let mut clues = Vec::with_capacity(raw.len());
    for r in raw {
        let clue = normalize_box(r.bbox, image)
            .map_err(|e| e.to_string())
            .and_then(|b| TextClue::new(r.content, b).map_err(|e| e.to_string()));
        match clue {
            Ok(c) => clues.push(c),
            Err(detail) => warnings.push(AgentWarning::BadBox { detail }),
        }
    }
    Ok((clues, warnings))
}
