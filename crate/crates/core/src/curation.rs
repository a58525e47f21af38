//! Instruction-tuning records and small-object benchmark skeletons.
//!
//! Candidates are images with pre-extracted OCR boxes and detections. A
//! text-rich or object-bearing candidate yields a negative record (round-one
//! prompt, refusal target) and a positive record (round-two prompt, gold
//! target); anything else yields a simple positive.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    group_detections, Detection, RawDetection, RawText, DEFAULT_MAX_PER_CLASS,
    DEFAULT_SCORE_THRESHOLD,
};
use crate::eval::BenchmarkItem;
use crate::model::{
    box_area_fraction, normalize_box, ChoiceOption, ClueSet, ImageRef, NormalizedBox, Query,
    TextClue,
};
use crate::orchestrator::{document_parts, ChatMessage, ContentPart};
use crate::parser::{classify_round_one, render_refusal, AgentCallRequest, RoundOneOutcome};
use crate::prompt::{
    compose_round_one, compose_round_two, ComposeError, ComposerOptions, PromptDocument,
    CLUE_HEADER,
};

/// Minimum long side, exclusive, for a text-rich image.
pub const TEXT_RICH_MIN_SIDE: u32 = 500;
/// Text boxes shorter than this many pixels count as tiny text.
pub const TINY_TEXT_HEIGHT: f64 = 20.0;
/// Benchmark boxes must cover strictly less than this fraction of the image.
pub const SMALL_OBJECT_AREA: f64 = 0.1;
pub const BENCH_TOP_K: usize = 5;
pub const ANNOTATION_COLOR: &str = "red";
pub const ANNOTATION_STROKE_PX: u32 = 3;

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("no detection in `{0}` survives the small-object filter")]
    NoSmallObjects(String),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error("{path}:{line}: {message}")]
    Candidate {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Negative,
    PositiveSimple,
    PositiveWithClues,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingRecord {
    pub prompt: PromptDocument,
    pub target: String,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrBox {
    pub content: String,
    pub pixel_box: [f64; 4],
    pub text_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateImage {
    pub image: ImageRef,
    pub ocr_boxes: Vec<OcrBox>,
    pub detections: Vec<Detection>,
}

impl CandidateImage {
    fn text_clues(&self) -> Vec<TextClue> {
        self.ocr_boxes
            .iter()
            .filter_map(|b| {
                let loc = normalize_box(b.pixel_box, &self.image).ok()?;
                TextClue::new(b.content.clone(), loc).ok()
            })
            .collect()
    }

    /// Distinct detected classes in first-seen order, compared case-insensitively.
    fn detected_classes(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.detections
            .iter()
            .map(|d| d.class_name.trim().to_string())
            .filter(|c| !c.is_empty() && seen.insert(c.to_lowercase()))
            .collect()
    }
}

/// Long side over 500 px and at least one text box under 20 px tall.
pub fn filter_text_rich(candidate: &CandidateImage) -> bool {
    let long_side = candidate.image.width.max(candidate.image.height);
    let min_height = candidate
        .ocr_boxes
        .iter()
        .map(|b| b.text_height)
        .min_by(f64::total_cmp);
    match min_height {
        Some(h) => long_side > TEXT_RICH_MIN_SIDE && h < TINY_TEXT_HEIGHT,
        None => false,
    }
}

pub fn build_negative(query: &Query, request: &AgentCallRequest) -> TrainingRecord {
    TrainingRecord {
        prompt: compose_round_one(query),
        target: render_refusal(request),
        polarity: Polarity::Negative,
    }
}

pub fn build_positive(
    query: &Query,
    clues: &ClueSet,
    gold: &str,
    opts: &ComposerOptions,
) -> Result<TrainingRecord, ComposeError> {
    if clues.is_empty() {
        return Ok(TrainingRecord {
            prompt: compose_round_one(query),
            target: gold.to_string(),
            polarity: Polarity::PositiveSimple,
        });
    }
    Ok(TrainingRecord {
        prompt: compose_round_two(query, clues, opts)?,
        target: gold.to_string(),
        polarity: Polarity::PositiveWithClues,
    })
}

/// Geometry and style of the box drawn onto a benchmark image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSpec {
    pub image_id: String,
    pub item_id: String,
    pub class_name: String,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: NormalizedBox,
    pub pixel_box: [f64; 4],
    pub color: String,
    pub stroke_px: u32,
}

/// One item skeleton per small object among the five best detections.
///
/// `{class}` in the stub is replaced by the detected class name. Options and
/// gold are left empty for question authoring downstream.
pub fn build_benchmark_item(
    candidate: &CandidateImage,
    question_stub: &str,
) -> Result<Vec<(BenchmarkItem, AnnotationSpec)>, CurationError> {
    let mut dets: Vec<&Detection> = candidate.detections.iter().collect();
    dets.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.bbox.x1().total_cmp(&b.bbox.x1()))
    });
    dets.truncate(BENCH_TOP_K);
    let image = &candidate.image;
    let out: Vec<_> = dets
        .into_iter()
        .filter(|d| box_area_fraction(&d.bbox) < SMALL_OBJECT_AREA)
        .enumerate()
        .map(|(k, d)| {
            let item_id = format!("{}#{k}", image.id);
            let item = BenchmarkItem {
                id: item_id.clone(),
                image: image.clone(),
                question: question_stub.replace("{class}", &d.class_name),
                options: Some(Vec::new()),
                gold: String::new(),
                tags: vec!["objects".to_string()],
                hint: None,
            };
            let spec = AnnotationSpec {
                image_id: image.id.clone(),
                item_id,
                class_name: d.class_name.clone(),
                score: d.score,
                bbox: d.bbox,
                pixel_box: d.bbox.to_pixels(image),
                color: ANNOTATION_COLOR.to_string(),
                stroke_px: ANNOTATION_STROKE_PX,
            };
            (item, spec)
        })
        .collect();
    if out.is_empty() {
        return Err(CurationError::NoSmallObjects(image.id.clone()));
    }
    Ok(out)
}

/// Candidate line on disk. Boxes are pixels, as in agent fixtures; a text
/// entry without `height` uses its box height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<ChoiceOption>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default)]
    pub texts: Vec<CandidateText>,
    #[serde(default)]
    pub detections: Vec<RawDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateText {
    pub content: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
}

impl From<RawText> for CandidateText {
    fn from(t: RawText) -> Self {
        Self {
            content: t.content,
            bbox: t.bbox,
            height: None,
        }
    }
}

/// A candidate plus the question it was collected with, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct CuratedSample {
    pub candidate: CandidateImage,
    pub query: Option<Query>,
    pub gold: Option<String>,
}

impl CandidateRecord {
    pub fn into_sample(self) -> Result<CuratedSample, String> {
        let source = self.source.clone().unwrap_or_else(|| self.image_id.clone());
        let image = ImageRef::new(self.image_id, self.width, self.height, source)
            .map_err(|e| e.to_string())?;
        let mut ocr_boxes = Vec::with_capacity(self.texts.len());
        for t in self.texts {
            if t.content.trim().is_empty() {
                return Err("text content must not be empty".into());
            }
            let text_height = t.height.unwrap_or((t.bbox[3] - t.bbox[1]).abs());
            if !(text_height.is_finite() && text_height > 0.0) {
                return Err(format!("text `{}` has non-positive height", t.content));
            }
            ocr_boxes.push(OcrBox {
                content: t.content,
                pixel_box: t.bbox,
                text_height,
            });
        }
        let detections = self
            .detections
            .into_iter()
            .map(|d| {
                Ok(Detection {
                    bbox: normalize_box(d.bbox, &image).map_err(|e| e.to_string())?,
                    class_name: d.class,
                    score: d.score,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        let query = match self.question {
            Some(q) => Some(
                Query::new(image.clone(), q, None, self.options.unwrap_or_default())
                    .map_err(|e| e.to_string())?,
            ),
            None => None,
        };
        Ok(CuratedSample {
            candidate: CandidateImage {
                image,
                ocr_boxes,
                detections,
            },
            query,
            gold: self.answer,
        })
    }
}

pub fn load_candidates(path: impl AsRef<Path>) -> Result<Vec<CuratedSample>, CurationError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| CurationError::Io(shown.clone(), e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| CurationError::Candidate {
            path: shown.clone(),
            line: i + 1,
            message,
        };
        let rec: CandidateRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        out.push(rec.into_sample().map_err(err)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Track {
    Text,
    Objects,
    Simple,
}

/// Per-polarity caps. `None` means unlimited.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quotas {
    #[serde(default)]
    pub negatives: Option<usize>,
    #[serde(default)]
    pub positives_simple: Option<usize>,
    #[serde(default)]
    pub positives_with_clues: Option<usize>,
}

impl Quotas {
    fn cap(&self, p: Polarity) -> Option<usize> {
        match p {
            Polarity::Negative => self.negatives,
            Polarity::PositiveSimple => self.positives_simple,
            Polarity::PositiveWithClues => self.positives_with_clues,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationManifest {
    pub negatives: usize,
    pub positives_simple: usize,
    pub positives_with_clues: usize,
    pub skipped_without_question: usize,
    pub quotas: Quotas,
}

impl CurationManifest {
    fn slot(&mut self, p: Polarity) -> &mut usize {
        match p {
            Polarity::Negative => &mut self.negatives,
            Polarity::PositiveSimple => &mut self.positives_simple,
            Polarity::PositiveWithClues => &mut self.positives_with_clues,
        }
    }

    pub fn total(&self) -> usize {
        self.negatives + self.positives_simple + self.positives_with_clues
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CuratedRecord {
    pub source_id: String,
    pub track: Track,
    pub record: TrainingRecord,
}

/// Output line: the record in chat message form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLine {
    pub source_id: String,
    pub track: Track,
    pub polarity: Polarity,
    pub messages: Vec<ChatMessage>,
}

impl CuratedRecord {
    pub fn to_line(&self) -> TrainingLine {
        TrainingLine {
            source_id: self.source_id.clone(),
            track: self.track,
            polarity: self.record.polarity,
            messages: vec![
                ChatMessage {
                    role: "user".into(),
                    content: document_parts(&self.record.prompt),
                },
                ChatMessage {
                    role: "assistant".into(),
                    content: vec![ContentPart::Text {
                        text: self.record.target.clone(),
                    }],
                },
            ],
        }
    }
}

/// Build records for every candidate that carries a question and answer,
/// stopping each polarity at its quota.
pub fn curate(
    samples: &[CuratedSample],
    quotas: Quotas,
    opts: &ComposerOptions,
) -> Result<(Vec<CuratedRecord>, CurationManifest), CurationError> {
    let mut manifest = CurationManifest {
        quotas,
        ..Default::default()
    };
    let mut records = Vec::new();
    let mut push =
        |manifest: &mut CurationManifest, source: &str, track, record: TrainingRecord| {
            let p = record.polarity;
            if quotas.cap(p).is_some_and(|cap| *manifest.slot(p) >= cap) {
                return;
            }
            *manifest.slot(p) += 1;
            records.push(CuratedRecord {
                source_id: source.to_string(),
                track,
                record,
            });
        };

    for sample in samples {
        let (Some(query), Some(gold)) = (&sample.query, &sample.gold) else {
            manifest.skipped_without_question += 1;
            continue;
        };
        let cand = &sample.candidate;
        let id = cand.image.id.as_str();
        if filter_text_rich(cand) {
            push(
                &mut manifest,
                id,
                Track::Text,
                build_negative(query, &AgentCallRequest::text()),
            );
            let clues = ClueSet {
                text_clues: cand.text_clues(),
                text_agent_ran: true,
                ..Default::default()
            };
            push(
                &mut manifest,
                id,
                Track::Text,
                build_positive(query, &clues, gold, opts)?,
            );
        } else if let Some(request) = object_request(cand) {
            push(
                &mut manifest,
                id,
                Track::Objects,
                build_negative(query, &request),
            );
            let (grounding, _) = group_detections(
                &cand.image,
                request.object_classes(),
                cand.detections.clone(),
                DEFAULT_SCORE_THRESHOLD,
                DEFAULT_MAX_PER_CLASS,
            );
            let clues = ClueSet {
                object_groups: grounding.groups,
                undetected_classes: grounding.undetected_classes,
                ..Default::default()
            };
            push(
                &mut manifest,
                id,
                Track::Objects,
                build_positive(query, &clues, gold, opts)?,
            );
        } else {
            let record = build_positive(query, &ClueSet::default(), gold, opts)?;
            push(&mut manifest, id, Track::Simple, record);
        }
    }
    Ok((records, manifest))
}

fn object_request(cand: &CandidateImage) -> Option<AgentCallRequest> {
    let classes = cand.detected_classes();
    if classes.is_empty() {
        return None;
    }
    AgentCallRequest::new(classes, false).ok()
}

/// Re-check emitted records against the curation rules; returns one line per
/// violation.
pub fn audit(records: &[CuratedRecord], samples: &[CuratedSample]) -> Vec<String> {
    let by_id: BTreeMap<&str, &CandidateImage> = samples
        .iter()
        .map(|s| (s.candidate.image.id.as_str(), &s.candidate))
        .collect();
    let mut out = Vec::new();
    for r in records {
        match r.record.polarity {
            Polarity::Negative => {
                if !matches!(
                    classify_round_one(&r.record.target),
                    Ok(RoundOneOutcome::Call { .. })
                ) {
                    out.push(format!(
                        "{}: negative target is not an agent call",
                        r.source_id
                    ));
                }
            }
            Polarity::PositiveWithClues => {
                if !r.record.prompt.render_text().contains(CLUE_HEADER) {
                    out.push(format!(
                        "{}: positive record lacks a clue block",
                        r.source_id
                    ));
                }
            }
            Polarity::PositiveSimple => {}
        }
        if r.track == Track::Text
            && !by_id
                .get(r.source_id.as_str())
                .is_some_and(|c| filter_text_rich(c))
        {
            out.push(format!(
                "{}: text-track record from an image that is not text-rich",
                r.source_id
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ocr(h: f64) -> OcrBox {
        OcrBox {
            content: "x".into(),
            pixel_box: [10.0, 10.0, 60.0, 10.0 + h],
            text_height: h,
        }
    }

    fn cand(w: u32, h: u32, heights: &[f64], dets: Vec<Detection>) -> CandidateImage {
        CandidateImage {
            image: ImageRef::new(format!("img{w}x{h}"), w, h, "x.png").unwrap(),
            ocr_boxes: heights.iter().map(|&h| ocr(h)).collect(),
            detections: dets,
        }
    }

    fn det(class: &str, b: [f64; 4], score: f64) -> Detection {
        Detection {
            class_name: class.into(),
            bbox: NormalizedBox::try_from(b).unwrap(),
            score,
        }
    }

    fn query(image: &ImageRef) -> Query {
        Query::new(image.clone(), "What is written?", None, vec![]).unwrap()
    }

    #[test]
    fn text_rich_rule() {
        assert!(filter_text_rich(&cand(800, 600, &[15.0, 40.0], vec![])));
        assert!(!filter_text_rich(&cand(400, 300, &[5.0], vec![])));
        assert!(!filter_text_rich(&cand(800, 600, &[20.0, 25.0], vec![])));
        assert!(!filter_text_rich(&cand(500, 500, &[5.0], vec![])));
        assert!(!filter_text_rich(&cand(800, 600, &[], vec![])));
    }

    #[test]
    fn negative_text_target_is_the_ocr_call() {
        let c = cand(800, 600, &[10.0], vec![]);
        let r = build_negative(&query(&c.image), &AgentCallRequest::text());
        assert_eq!(
            r.target,
            "Sorry, I cannot answer the question. Some visual information about the following objects is missing or unclear: text in the image."
        );
        assert_eq!(r.polarity, Polarity::Negative);
    }

    #[test]
    fn negative_object_target_round_trips() {
        let c = cand(800, 600, &[], vec![]);
        let req = AgentCallRequest::objects(&["sheep"]).unwrap();
        let r = build_negative(&query(&c.image), &req);
        assert!(r.target.contains("sheep"));
        assert_eq!(
            classify_round_one(&r.target).unwrap(),
            RoundOneOutcome::Call { request: req }
        );
    }

    #[test]
    fn positive_without_clues_is_simple() {
        let c = cand(300, 300, &[], vec![]);
        let r = build_positive(
            &query(&c.image),
            &ClueSet::default(),
            "cat",
            &ComposerOptions::default(),
        )
        .unwrap();
        assert_eq!(r.polarity, Polarity::PositiveSimple);
        assert_eq!(r.prompt, compose_round_one(&query(&c.image)));
    }

    #[test]
    fn bench_keeps_top_five_then_small() {
        // scores descending; the 0.95 box is large, the two lowest fall outside the top five
        let dets = vec![
            det("cup", [0.0, 0.0, 0.5, 0.5], 0.95),
            det("pen", [0.1, 0.1, 0.2, 0.2], 0.90),
            det("key", [0.3, 0.3, 0.4, 0.4], 0.80),
            det("cup", [0.5, 0.5, 0.6, 0.6], 0.70),
            det("ring", [0.7, 0.7, 0.8, 0.8], 0.60),
            det("coin", [0.8, 0.1, 0.85, 0.15], 0.50),
            det("clip", [0.1, 0.8, 0.15, 0.85], 0.40),
        ];
        let c = cand(1000, 1000, &[], dets);
        let items = build_benchmark_item(&c, "What color is the {class}?").unwrap();
        let classes: Vec<_> = items.iter().map(|(_, a)| a.class_name.as_str()).collect();
        assert_eq!(classes, ["pen", "key", "cup", "ring"]);
        assert_eq!(items[0].0.question, "What color is the pen?");
        assert_eq!(items[0].1.color, "red");
        assert_eq!(items[0].1.stroke_px, 3);
        assert_eq!(items[0].1.pixel_box, [100.0, 100.0, 200.0, 200.0]);
        assert!(items
            .iter()
            .all(|(i, _)| i.options.as_ref().is_some_and(Vec::is_empty)));
    }

    #[test]
    fn large_or_boundary_boxes_are_rejected() {
        let big = cand(100, 100, &[], vec![det("dog", [0.0, 0.0, 0.5, 0.5], 0.9)]);
        assert!(matches!(
            build_benchmark_item(&big, "q"),
            Err(CurationError::NoSmallObjects(_))
        ));
        // 0.25 x 0.4 covers exactly one tenth
        let edge = cand(100, 100, &[], vec![det("dog", [0.0, 0.0, 0.25, 0.4], 0.9)]);
        assert!(build_benchmark_item(&edge, "q").is_err());
        let none = cand(100, 100, &[], vec![]);
        assert!(build_benchmark_item(&none, "q").is_err());
    }

    fn sample(c: CandidateImage) -> CuratedSample {
        CuratedSample {
            query: Some(query(&c.image)),
            gold: Some("gold".into()),
            candidate: c,
        }
    }

    #[test]
    fn curate_routes_by_track_and_honors_quotas() {
        let samples = vec![
            sample(cand(800, 600, &[10.0], vec![])),
            sample(cand(
                300,
                200,
                &[],
                vec![det("sheep", [0.1, 0.1, 0.2, 0.2], 0.8)],
            )),
            sample(cand(320, 200, &[], vec![])),
            CuratedSample {
                query: None,
                gold: None,
                candidate: cand(330, 200, &[], vec![]),
            },
        ];
        let opts = ComposerOptions::default();
        let (records, m) = curate(&samples, Quotas::default(), &opts).unwrap();
        assert_eq!(
            (m.negatives, m.positives_with_clues, m.positives_simple),
            (2, 2, 1)
        );
        assert_eq!(m.skipped_without_question, 1);
        assert_eq!(records.len(), m.total());
        assert!(audit(&records, &samples).is_empty());
        let tracks: Vec<_> = records.iter().map(|r| r.track).collect();
        assert_eq!(
            tracks,
            [
                Track::Text,
                Track::Text,
                Track::Objects,
                Track::Objects,
                Track::Simple
            ]
        );

        let quotas = Quotas {
            negatives: Some(1),
            positives_simple: Some(0),
            positives_with_clues: None,
        };
        let (records, m) = curate(&samples, quotas, &opts).unwrap();
        assert_eq!(
            (m.negatives, m.positives_with_clues, m.positives_simple),
            (1, 2, 0)
        );
        assert_eq!(records.len(), 3);
    }

    #[test]
    fn training_line_uses_chat_messages() {
        let s = sample(cand(800, 600, &[10.0], vec![]));
        let (records, _) = curate(&[s], Quotas::default(), &ComposerOptions::default()).unwrap();
        let line = records[1].to_line();
        assert_eq!(line.messages[0].role, "user");
        assert_eq!(
            line.messages[1].content,
            vec![ContentPart::Text {
                text: "gold".into()
            }]
        );
        let json = serde_json::to_string(&line).unwrap();
        let back: TrainingLine = serde_json::from_str(&json).unwrap();
        assert_eq!(back, line);
    }

    #[test]
    fn candidate_record_height_defaults_to_box() {
        let rec: CandidateRecord = serde_json::from_str(
            r#"{"image_id":"a","width":900,"height":700,"question":"q","answer":"x",
                "texts":[{"content":"tiny","box":[0,0,40,12]}]}"#,
        )
        .unwrap();
        let s = rec.into_sample().unwrap();
        assert_eq!(s.candidate.ocr_boxes[0].text_height, 12.0);
        assert!(filter_text_rich(&s.candidate));
        assert!(serde_json::from_str::<CandidateRecord>(
            r#"{"image_id":"a","width":1,"height":1,"bogus":1}"#
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn bench_boxes_are_small_and_capped(
            raw in prop::collection::vec((0.0f64..0.9, 0.0f64..0.9, 0.001f64..0.6, 0.001f64..0.6, 0.0f64..1.0), 1..15)
        ) {
            let dets = raw
                .iter()
                .map(|&(x, y, w, h, s)| det("obj", [x, y, (x + w).min(1.0), (y + h).min(1.0)], s))
                .collect();
            let c = cand(640, 480, &[], dets);
            if let Ok(items) = build_benchmark_item(&c, "q") {
                prop_assert!(items.len() <= BENCH_TOP_K);
                for (_, a) in &items {
                    prop_assert!(box_area_fraction(&a.bbox) < SMALL_OBJECT_AREA);
                }
            }
        }
    }
}
