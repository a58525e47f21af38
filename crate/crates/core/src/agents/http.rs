//! JSON-over-HTTP agent client.
//!
//! Grounding: `POST {image, classes, threshold}` -> `{detections: [...]}`.
//! OCR: `POST {image}` -> `{texts: [...]}`. Boxes are pixels on the wire.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{AgentError, AgentService, RawDetection, RawText};
use crate::model::ImageRef;

#[derive(Debug, Serialize)]
pub struct GroundingRequest<'a> {
    pub image: &'a ImageRef,
    pub classes: &'a [String],
    pub threshold: f64,
}

#[derive(Debug, Serialize)]
pub struct OcrRequest<'a> {
    pub image: &'a ImageRef,
}

#[derive(Debug, Deserialize)]
struct GroundingResponse {
    detections: Vec<RawDetection>,
}

#[derive(Debug, Deserialize)]
struct OcrResponse {
    texts: Vec<RawText>,
}

pub struct HttpAgent {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpAgent {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            client: reqwest::blocking::Client::new(),
        }
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        image: &ImageRef,
        body: &B,
        timeout_ms: u64,
    ) -> Result<R, AgentError> {
        let unavailable = |reason: String| AgentError::AgentUnavailable {
            image_id: image.id.clone(),
            reason,
        };
        let resp = self
            .client
            .post(&self.url)
            .timeout(Duration::from_millis(timeout_ms))
            .json(body)
            .send()
            .map_err(|e| unavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(unavailable(format!("HTTP {status}")));
        }
        resp.json::<R>()
            .map_err(|e| unavailable(format!("malformed reply: {e}")))
    }
}

impl AgentService for HttpAgent {
    fn detect(
        &self,
        image: &ImageRef,
        classes: &[String],
        threshold: f64,
        timeout_ms: u64,
    ) -> Result<Vec<RawDetection>, AgentError> {
        let body = GroundingRequest {
            image,
            classes,
            threshold,
        };
        self.post::<_, GroundingResponse>(image, &body, timeout_ms)
            .map(|r| r.detections)
    }

    fn read_text(&self, image: &ImageRef, timeout_ms: u64) -> Result<Vec<RawText>, AgentError> {
        self.post::<_, OcrResponse>(image, &OcrRequest { image }, timeout_ms)
            .map(|r| r.texts)
    }
}
