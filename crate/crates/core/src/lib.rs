//! Two-round grounded reasoning over multimodal chat backends.
//!
//! A query first goes to the backend as-is. If the model answers, that is the
//! result. If it replies with the fixed refusal naming missing objects or
//! "text in the image", the grounding and/or OCR agents are called, their
//! clues are rendered into a second prompt (locations as normalized boxes,
//! object crops bound to `<object>` placeholders) and the backend answers once
//! more.
//!
//! Modules, bottom-up:
//!
//! - [`model`]: boxes, image references, queries, clue sets
//! - [`parser`]: round-one answer/refusal grammar
//! - [`agents`]: grounding and OCR agents, grouping, crops, fixtures
//! - [`prompt`]: prompt composition
//! - [`router`]: MLP/Resampler token routing and the context budget
//! - [`orchestrator`]: the two-round state machine, traces, batch runner
//! - [`eval`]: datasets, scoring, routing statistics, simple/hard splits
//! - [`curation`]: instruction-tuning records and benchmark skeletons
//! - [`config`] and [`cli`]: the `groundloop` command

pub mod agents;
pub mod cli;
pub mod config;
pub mod curation;
pub mod eval;
pub mod model;
pub mod orchestrator;
pub mod parser;
pub mod prompt;
pub mod router;
