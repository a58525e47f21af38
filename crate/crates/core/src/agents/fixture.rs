//! Recorded agent replies, one JSON object per line:
//!
//! ```text
//! {"image_id": "letter", "kind": "ocr", "texts": [{"content": "May311918", "box": [x1, y1, x2, y2]}]}
//! {"image_id": "desk", "kind": "grounding", "detections": [{"class": "button", "box": [..], "score": 0.91}]}
//! ```
//!
//! Boxes are in pixels, exactly as a live agent would send them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AgentEndpoint, AgentError, AgentKind, AgentService, RawDetection, RawText, Transport};
use crate::model::ImageRef;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{path}:{line}: {field}: {message}")]
pub struct FixtureParseError {
    pub path: String,
    pub line: usize,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureRecord {
    pub image_id: String,
    pub kind: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<Vec<RawDetection>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texts: Option<Vec<RawText>>,
}

impl FixtureRecord {
    pub fn grounding(image_id: impl Into<String>, detections: Vec<RawDetection>) -> Self {
        Self {
            image_id: image_id.into(),
            kind: AgentKind::Grounding,
            detections: Some(detections),
            texts: None,
        }
    }

    pub fn ocr(image_id: impl Into<String>, texts: Vec<RawText>) -> Self {
        Self {
            image_id: image_id.into(),
            kind: AgentKind::Ocr,
            detections: None,
            texts: Some(texts),
        }
    }

    /// Returns (field, message) of the first violated constraint.
    fn check(&self) -> Result<(), (String, String)> {
        let fail = |f: String, m: String| Err((f, m));
        if self.image_id.is_empty() {
            return fail("image_id".into(), "must not be empty".into());
        }
        match self.kind {
            AgentKind::Grounding => {
                let Some(dets) = &self.detections else {
                    return fail("detections".into(), "required for kind grounding".into());
                };
                if self.texts.is_some() {
                    return fail("texts".into(), "not allowed for kind grounding".into());
                }
                for (i, d) in dets.iter().enumerate() {
                    if !(0.0..=1.0).contains(&d.score) {
                        return fail(
                            format!("detections[{i}].score"),
                            format!("{} outside [0,1]", d.score),
                        );
                    }
                    if d.bbox.iter().any(|v| !v.is_finite()) {
                        return fail(
                            format!("detections[{i}].box"),
                            "non-finite coordinate".into(),
                        );
                    }
                    if d.class.trim().is_empty() {
                        return fail(format!("detections[{i}].class"), "must not be empty".into());
                    }
                }
            }
            AgentKind::Ocr => {
                let Some(texts) = &self.texts else {
                    return fail("texts".into(), "required for kind ocr".into());
                };
                if self.detections.is_some() {
                    return fail("detections".into(), "not allowed for kind ocr".into());
                }
                for (i, t) in texts.iter().enumerate() {
                    if t.content.is_empty() {
                        return fail(format!("texts[{i}].content"), "must not be empty".into());
                    }
                    if t.bbox.iter().any(|v| !v.is_finite()) {
                        return fail(format!("texts[{i}].box"), "non-finite coordinate".into());
                    }
                }
            }
        }
        Ok(())
    }
}

/// Read-only table of recorded replies keyed by (image id, kind).
#[derive(Debug, Default)]
pub struct FixtureAgent {
    detections: BTreeMap<String, Vec<RawDetection>>,
    texts: BTreeMap<String, Vec<RawText>>,
}

impl FixtureAgent {
    pub fn from_records(records: Vec<FixtureRecord>) -> Result<Self, FixtureParseError> {
        let mut agent = Self::default();
        for (i, rec) in records.into_iter().enumerate() {
            agent
                .insert(rec)
                .map_err(|(field, message)| FixtureParseError {
                    path: "<memory>".into(),
                    line: i + 1,
                    field,
                    message,
                })?;
        }
        Ok(agent)
    }

    pub fn parse(text: &str, path: &str) -> Result<Self, FixtureParseError> {
        let mut agent = Self::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let err = |field: String, message: String| FixtureParseError {
                path: path.to_string(),
                line: line_no,
                field,
                message,
            };
            let rec: FixtureRecord =
                serde_json::from_str(line).map_err(|e| err("record".into(), e.to_string()))?;
            agent.insert(rec).map_err(|(f, m)| err(f, m))?;
        }
        Ok(agent)
    }

    fn insert(&mut self, rec: FixtureRecord) -> Result<(), (String, String)> {
        rec.check()?;
        let dup = match rec.kind {
            AgentKind::Grounding => self
                .detections
                .insert(rec.image_id.clone(), rec.detections.unwrap_or_default())
                .is_some(),
            AgentKind::Ocr => self
                .texts
                .insert(rec.image_id.clone(), rec.texts.unwrap_or_default())
                .is_some(),
        };
        if dup {
            return Err((
                "image_id".into(),
                format!("duplicate {} record for `{}`", rec.kind, rec.image_id),
            ));
        }
        Ok(())
    }

    fn missing(image: &ImageRef, kind: AgentKind) -> AgentError {
        AgentError::AgentUnavailable {
            image_id: image.id.clone(),
            reason: format!("no {kind} fixture record"),
        }
    }
}

impl AgentService for FixtureAgent {
    fn detect(
        &self,
        image: &ImageRef,
        _classes: &[String],
        _threshold: f64,
        _timeout_ms: u64,
    ) -> Result<Vec<RawDetection>, AgentError> {
        self.detections
            .get(&image.id)
            .cloned()
            .ok_or_else(|| Self::missing(image, AgentKind::Grounding))
    }

    fn read_text(&self, image: &ImageRef, _timeout_ms: u64) -> Result<Vec<RawText>, AgentError> {
        self.texts
            .get(&image.id)
            .cloned()
            .ok_or_else(|| Self::missing(image, AgentKind::Ocr))
    }
}

/// Load a fixture file and expose it as an endpoint of the given kind.
pub fn load_fixture_agent(
    path: impl AsRef<Path>,
    kind: AgentKind,
) -> Result<AgentEndpoint, FixtureParseError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| FixtureParseError {
        path: shown.clone(),
        line: 0,
        field: "file".into(),
        message: e.to_string(),
    })?;
    let agent = FixtureAgent::parse(&text, &shown)?;
    Ok(AgentEndpoint::new(
        kind,
        Transport::Fixture(PathBuf::from(path)),
        Arc::new(agent),
    ))
}
