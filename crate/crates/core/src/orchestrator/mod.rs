//! The two-round loop: ask, parse, ground, ask again.
//!
//! Round one sends the image and question. A direct answer ends the sample. A
//! refusal dispatches the requested agents, composes a grounded prompt within
//! the token budget and sends exactly one more request, whose reply is final.

mod backend;
mod trace;

use std::collections::BTreeMap;
use std::sync::{mpsc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{
    ground_objects, ocr_texts, AgentEndpoint, AgentError, AgentKind, GroundingResult,
};
use crate::model::{ClueSet, Query, TextClue};
use crate::parser::{classify_round_one, AgentCallRequest, RoundOneOutcome};
use crate::prompt::{compose_round_one, compose_round_two, ComposeError, ComposerOptions};
use crate::router::{estimate_tokens, route_projection, truncate_text_clues, Budget};

pub use backend::{
    build_request, call_backend, document_parts, Backend, BackendEndpoint, BackendError,
    ChatMessage, ChatRequest, ChatResponse, ChatTransport, ContentPart, HttpChatTransport, Script,
    ScriptedBackend, TransportError, MAX_RETRY_LIMIT,
};
pub use trace::{
    read_traces, write_trace, AgentCallRecord, RoutingHistogram, RunCounts, RunManifest, Timings,
    Trace, TRACE_VERSION,
};

/// Backend calls per sample. Structural: there is no third round.
pub const MAX_ROUNDS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{kind} agent failed: {source}")]
    Agent { kind: AgentKind, source: AgentError },
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

/// A failed sample together with everything recorded before the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFailure {
    pub trace: Box<Trace>,
    pub error: SampleError,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentFailurePolicy {
    /// Compose round two with whatever clues exist.
    #[default]
    Proceed,
    FailSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub composer: ComposerOptions,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub on_agent_failure: AgentFailurePolicy,
}

fn default_parallelism() -> usize {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            composer: ComposerOptions::default(),
            budget: Budget::default(),
            parallelism: default_parallelism(),
            on_agent_failure: AgentFailurePolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Agents {
    pub grounding: Option<AgentEndpoint>,
    pub ocr: Option<AgentEndpoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub query: Query,
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

/// Run both rounds for one query.
pub fn run_sample(
    sample: &Sample,
    backend: &Backend,
    agents: &Agents,
    config: &RunConfig,
) -> Result<Trace, SampleFailure> {
    let started = Instant::now();
    let mut trace = Trace::new(&sample.id);
    let result = drive(sample, backend, agents, config, &mut trace);
    trace.timings.total_ms = elapsed_ms(started);
    match result {
        Ok(()) => Ok(trace),
        Err(error) => {
            trace.error = Some(error.to_string());
            Err(SampleFailure {
                trace: Box::new(trace),
                error,
            })
        }
    }
}

fn drive(
    sample: &Sample,
    backend: &Backend,
    agents: &Agents,
    config: &RunConfig,
    trace: &mut Trace,
) -> Result<(), SampleError> {
    let query = &sample.query;
    query
        .validate()
        .map_err(|e| SampleError::InvalidQuery(e.to_string()))?;

    let round1 = compose_round_one(query);
    trace.round1_prompt = Some(round1.record());
    let t = Instant::now();
    let raw1 = call_backend(backend, &round1)?;
    trace.timings.round1_ms = elapsed_ms(t);
    trace.round1_raw = Some(raw1.clone());

    let request = match classify_round_one(&raw1) {
        Ok(RoundOneOutcome::Direct { answer }) => {
            trace.outcome = Some(RoundOneOutcome::Direct {
                answer: answer.clone(),
            });
            trace.final_answer = answer;
            return Ok(());
        }
        Ok(RoundOneOutcome::Call { request }) => request,
        Err(e) => {
            // A bare refusal prefix is not a usable call; keep it as the answer.
            let answer = raw1.trim().to_string();
            trace
                .warnings
                .push(format!("round-one refusal unusable: {e}"));
            trace.outcome = Some(RoundOneOutcome::Direct {
                answer: answer.clone(),
            });
            trace.final_answer = answer;
            return Ok(());
        }
    };
    trace.outcome = Some(RoundOneOutcome::Call {
        request: request.clone(),
    });

    let t = Instant::now();
    let clues = gather_clues(query, &request, agents, config, trace)?;
    trace.timings.agents_ms = elapsed_ms(t);

    // Validate once on the full clue set; text-clue prefixes cannot break it.
    let full = compose_round_two(query, &clues, &config.composer)?;
    let (clues, doc) = if clues.text_clues.is_empty() {
        (clues, full)
    } else {
        let build = |kept: &[TextClue]| {
            let subset = ClueSet {
                text_clues: kept.to_vec(),
                ..clues.clone()
            };
            compose_round_two(query, &subset, &config.composer)
                .expect("text-clue prefix of a valid clue set composes")
        };
        let truncation = truncate_text_clues(&clues.text_clues, build, &config.budget)
            .expect("builder output matches its own routing plan");
        trace.dropped_text_clues = truncation.dropped;
        let doc = build(&truncation.kept);
        let kept = ClueSet {
            text_clues: truncation.kept,
            ..clues
        };
        (kept, doc)
    };

    let plan = route_projection(doc.object_slots());
    trace.prompt_tokens = estimate_tokens(&doc, &plan, &config.budget).ok();
    if let Some(tokens) = trace.prompt_tokens {
        if tokens > config.budget.context_limit {
            trace.warnings.push(format!(
                "round-two prompt estimated at {tokens} tokens exceeds limit {}",
                config.budget.context_limit
            ));
        }
    }
    trace.routing_plan = Some(plan);
    trace.clue_set = Some(clues);
    trace.round2_prompt = Some(doc.record());

    let t = Instant::now();
    let raw2 = call_backend(backend, &doc)?;
    trace.timings.round2_ms = elapsed_ms(t);
    trace.repeated_refusal = matches!(classify_round_one(&raw2), Ok(RoundOneOutcome::Call { .. }));
    trace.final_answer = raw2.trim().to_string();
    trace.round2_raw = Some(raw2);
    Ok(())
}

fn unavailable(kind: AgentKind, query: &Query) -> AgentError {
    AgentError::AgentUnavailable {
        image_id: query.image.id.clone(),
        reason: format!("no {kind} agent configured"),
    }
}

/// Call exactly the agents the request names and assemble the clue set.
fn gather_clues(
    query: &Query,
    request: &AgentCallRequest,
    agents: &Agents,
    config: &RunConfig,
    trace: &mut Trace,
) -> Result<ClueSet, SampleError> {
    let mut clues = ClueSet::default();

    if request.wants_grounding() {
        let classes = request.object_classes().to_vec();
        let t = Instant::now();
        let outcome = agents
            .grounding
            .as_ref()
            .ok_or_else(|| unavailable(AgentKind::Grounding, query))
            .and_then(|ep| ground_objects(&query.image, &classes, ep));
        let mut record = AgentCallRecord {
            kind: AgentKind::Grounding,
            request: classes.clone(),
            duration_ms: elapsed_ms(t),
            result_summary: String::new(),
            warnings: Vec::new(),
            error: None,
        };
        let result = match outcome {
            Ok((result, warnings)) => {
                record.warnings = warnings.iter().map(ToString::to_string).collect();
                result
            }
            Err(e) => {
                record.error = Some(e.to_string());
                if config.on_agent_failure == AgentFailurePolicy::FailSample {
                    record.result_summary = "failed".into();
                    trace.agent_calls.push(record);
                    return Err(SampleError::Agent {
                        kind: AgentKind::Grounding,
                        source: e,
                    });
                }
                GroundingResult::all_undetected(&classes)
            }
        };
        record.result_summary = format!(
            "{} group(s), {} object(s), {} undetected",
            result.groups.len(),
            result.object_count(),
            result.undetected_classes.len()
        );
        trace.agent_calls.push(record);
        clues.object_groups = result.groups;
        clues.undetected_classes = result.undetected_classes;
    }

    if request.wants_text() {
        let t = Instant::now();
        let outcome = agents
            .ocr
            .as_ref()
            .ok_or_else(|| unavailable(AgentKind::Ocr, query))
            .and_then(|ep| ocr_texts(&query.image, ep));
        let mut record = AgentCallRecord {
            kind: AgentKind::Ocr,
            request: Vec::new(),
            duration_ms: elapsed_ms(t),
            result_summary: String::new(),
            warnings: Vec::new(),
            error: None,
        };
        let texts = match outcome {
            Ok((texts, warnings)) => {
                record.warnings = warnings.iter().map(ToString::to_string).collect();
                texts
            }
            Err(e) => {
                record.error = Some(e.to_string());
                if config.on_agent_failure == AgentFailurePolicy::FailSample {
                    record.result_summary = "failed".into();
                    trace.agent_calls.push(record);
                    return Err(SampleError::Agent {
                        kind: AgentKind::Ocr,
                        source: e,
                    });
                }
                Vec::new()
            }
        };
        record.result_summary = format!("{} text clue(s)", texts.len());
        trace.agent_calls.push(record);
        clues.text_clues = texts;
        clues.text_agent_ran = true;
    }
    Ok(clues)
}

/// Stable hash of everything that can change a run's outputs. Parallelism is
/// excluded: it never changes the traces.
pub fn config_hash(backend: &BackendEndpoint, agents: &Agents, config: &RunConfig) -> String {
    let agent_view = |ep: &Option<AgentEndpoint>| {
        ep.as_ref().map(|ep| {
            serde_json::json!({
                "kind": ep.kind,
                "transport": ep.transport,
                "timeout_ms": ep.timeout_ms,
                "score_threshold": ep.score_threshold,
                "max_per_class": ep.max_per_class,
            })
        })
    };
    let view = serde_json::json!({
        "trace_version": TRACE_VERSION,
        "max_rounds": MAX_ROUNDS,
        "backend": backend,
        "grounding": agent_view(&agents.grounding),
        "ocr": agent_view(&agents.ocr),
        "composer": config.composer,
        "budget": config.budget,
        "on_agent_failure": config.on_agent_failure,
    });
    let digest = Sha256::digest(view.to_string().as_bytes());
    hex::encode(digest)
}

/// Run every sample and hand traces to `sink` in input order.
///
/// Up to `config.parallelism` samples are in flight at once; completed traces
/// are buffered until all earlier ones have been emitted. Failed samples
/// produce error traces and never stop the batch.
pub fn run_batch<I, F>(
    samples: I,
    backend: &Backend,
    agents: &Agents,
    config: &RunConfig,
    mut sink: F,
) -> RunManifest
where
    I: IntoIterator<Item = Sample>,
    I::IntoIter: Send,
    F: FnMut(Trace),
{
    let workers = config.parallelism.max(1);
    let queue = Mutex::new(samples.into_iter().enumerate());
    let mut counts = RunCounts::default();

    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, Trace)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let queue = &queue;
            scope.spawn(move || loop {
                let next = queue.lock().expect("sample queue poisoned").next();
                let Some((idx, sample)) = next else { break };
                let trace = match run_sample(&sample, backend, agents, config) {
                    Ok(t) => t,
                    Err(failure) => {
                        tracing::warn!(sample = %sample.id, error = %failure.error, "sample failed");
                        *failure.trace
                    }
                };
                if tx.send((idx, trace)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending: BTreeMap<usize, Trace> = BTreeMap::new();
        let mut next_out = 0;
        for (idx, trace) in rx {
            pending.insert(idx, trace);
            while let Some(trace) = pending.remove(&next_out) {
                counts.add(&trace);
                sink(trace);
                next_out += 1;
            }
        }
    });

    RunManifest {
        trace_version: TRACE_VERSION,
        config_hash: config_hash(&backend.endpoint, agents, config),
        max_rounds: MAX_ROUNDS,
        model: backend.endpoint.model.clone(),
        sampling: backend.endpoint.sampling.clone(),
        parallelism: workers,
        counts,
    }
}
