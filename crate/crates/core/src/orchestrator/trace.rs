//! Per-sample trace records and the per-run manifest, persisted as JSON lines.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::agents::AgentKind;
use crate::model::ClueSet;
use crate::parser::{classify_round_one, RoundOneOutcome};
use crate::prompt::PromptRecord;
use crate::router::RoutingPlan;

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub round1_ms: u64,
    pub agents_ms: u64,
    pub round2_ms: u64,
    pub total_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCallRecord {
    pub kind: AgentKind,
    /// Requested classes (grounding); empty for OCR.
    pub request: Vec<String>,
    pub duration_ms: u64,
    pub result_summary: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub trace_version: u32,
    pub sample_id: String,
    pub round1_prompt: Option<PromptRecord>,
    pub round1_raw: Option<String>,
    pub outcome: Option<RoundOneOutcome>,
    pub agent_calls: Vec<AgentCallRecord>,
    pub clue_set: Option<ClueSet>,
    pub routing_plan: Option<RoutingPlan>,
    pub prompt_tokens: Option<usize>,
    pub dropped_text_clues: usize,
    pub round2_prompt: Option<PromptRecord>,
    pub round2_raw: Option<String>,
    /// Round two answered with another refusal; kept as the final answer.
    pub repeated_refusal: bool,
    pub final_answer: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub timings: Timings,
}

impl Trace {
    pub fn new(sample_id: impl Into<String>) -> Self {
        Self {
            trace_version: TRACE_VERSION,
            sample_id: sample_id.into(),
            round1_prompt: None,
            round1_raw: None,
            outcome: None,
            agent_calls: Vec::new(),
            clue_set: None,
            routing_plan: None,
            prompt_tokens: None,
            dropped_text_clues: 0,
            round2_prompt: None,
            round2_raw: None,
            repeated_refusal: false,
            final_answer: String::new(),
            warnings: Vec::new(),
            error: None,
            timings: Timings::default(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }

    pub fn called(&self, kind: AgentKind) -> bool {
        self.agent_calls.iter().any(|c| c.kind == kind)
    }

    /// Copy with every wall-clock field zeroed, for run-to-run comparison.
    pub fn without_timings(&self) -> Self {
        let mut t = self.clone();
        t.timings = Timings::default();
        for call in &mut t.agent_calls {
            call.duration_ms = 0;
        }
        t
    }

    /// Recompute the final answer from the recorded raw outputs alone.
    pub fn replay_final_answer(&self) -> Option<String> {
        let raw1 = self.round1_raw.as_deref()?;
        match classify_round_one(raw1) {
            Ok(RoundOneOutcome::Call { .. }) => {
                self.round2_raw.as_deref().map(|r| r.trim().to_string())
            }
            Ok(RoundOneOutcome::Direct { answer }) => Some(answer),
            Err(_) => Some(raw1.trim().to_string()),
        }
    }
}

/// Routing buckets for a set of traces.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingHistogram {
    pub direct: usize,
    pub ocr_only: usize,
    pub grounding_only: usize,
    pub both: usize,
}

impl RoutingHistogram {
    pub fn add(&mut self, trace: &Trace) {
        match (
            trace.called(AgentKind::Grounding),
            trace.called(AgentKind::Ocr),
        ) {
            (false, false) => self.direct += 1,
            (false, true) => self.ocr_only += 1,
            (true, false) => self.grounding_only += 1,
            (true, true) => self.both += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.direct + self.ocr_only + self.grounding_only + self.both
    }
}

impl<'a> FromIterator<&'a Trace> for RoutingHistogram {
    fn from_iter<I: IntoIterator<Item = &'a Trace>>(iter: I) -> Self {
        let mut h = Self::default();
        for t in iter {
            h.add(t);
        }
        h
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub samples: usize,
    pub direct: usize,
    pub called: usize,
    pub errors: usize,
    pub repeated_refusals: usize,
    pub dropped_text_clues: usize,
    pub routing: RoutingHistogram,
}

impl RunCounts {
    pub fn add(&mut self, trace: &Trace) {
        self.samples += 1;
        match trace.outcome {
            Some(RoundOneOutcome::Direct { .. }) => self.direct += 1,
            Some(RoundOneOutcome::Call { .. }) => self.called += 1,
            None => {}
        }
        if trace.is_error() {
            self.errors += 1;
        }
        if trace.repeated_refusal {
            self.repeated_refusals += 1;
        }
        self.dropped_text_clues += trace.dropped_text_clues;
        self.routing.add(trace);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub trace_version: u32,
    pub config_hash: String,
    pub max_rounds: usize,
    pub model: String,
    pub sampling: BTreeMap<String, serde_json::Value>,
    pub parallelism: usize,
    pub counts: RunCounts,
}

pub fn write_trace<W: Write>(out: &mut W, trace: &Trace) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, trace)?;
    out.write_all(b"\n")
}

pub fn read_traces<R: BufRead>(input: R) -> Result<Vec<Trace>, String> {
    let mut traces = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trace = serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
        if t.trace_version != TRACE_VERSION {
            return Err(format!(
                "line {}: unsupported trace_version {}",
                i + 1,
                t.trace_version
            ));
        }
        traces.push(t);
    }
    Ok(traces)
}
