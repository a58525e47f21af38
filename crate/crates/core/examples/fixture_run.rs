//! Full two-round run against a scripted backend and fixture agents.
//!
//! `cargo run --example fixture_run`

use std::sync::Arc;

use groundloop::agents::{
    AgentEndpoint, AgentKind, FixtureAgent, FixtureRecord, RawDetection, RawText, Transport,
};
use groundloop::model::{ImageRef, Query};
use groundloop::orchestrator::{
    run_batch, Agents, Backend, BackendEndpoint, RunConfig, Sample, Script, ScriptedBackend,
};

const REFUSAL: &str = "Sorry, I cannot answer the question. Some visual information about the following objects is missing or unclear:";

fn main() {
    let scripts = vec![
        Script {
            image_id: "cat".into(),
            round1: "A".into(),
            ..Default::default()
        },
        Script {
            image_id: "mug".into(),
            round1: format!("{REFUSAL} mug."),
            round2: Some("blue".into()),
            ..Default::default()
        },
        Script {
            image_id: "note".into(),
            round1: format!("{REFUSAL} text in the image."),
            round2: Some("Tuesday".into()),
            ..Default::default()
        },
    ];
    let backend = Backend::new(
        BackendEndpoint::new("scripted://example", "scripted"),
        Arc::new(ScriptedBackend::new(scripts)),
    );

    let fixture = |kind, record| {
        let agent = FixtureAgent::from_records(vec![record]).unwrap();
        Some(AgentEndpoint::new(
            kind,
            Transport::InProcess("example".into()),
            Arc::new(agent),
        ))
    };
    let agents = Agents {
        grounding: fixture(
            AgentKind::Grounding,
            FixtureRecord::grounding(
                "mug",
                vec![RawDetection {
                    class: "mug".into(),
                    bbox: [40.0, 60.0, 90.0, 120.0],
                    score: 0.8,
                }],
            ),
        ),
        ocr: fixture(
            AgentKind::Ocr,
            FixtureRecord::ocr(
                "note",
                vec![RawText {
                    content: "meet tuesday".into(),
                    bbox: [10.0, 10.0, 300.0, 40.0],
                }],
            ),
        ),
    };

    let sample = |id: &str, q: &str| Sample {
        id: id.into(),
        query: Query::new(
            ImageRef::new(id, 640, 480, format!("{id}.jpg")).unwrap(),
            q,
            None,
            vec![],
        )
        .unwrap(),
    };
    let samples = vec![
        sample("cat", "Is there a cat?"),
        sample("mug", "What color is the mug?"),
        sample("note", "Which day is the meeting?"),
    ];
    let config = RunConfig {
        parallelism: 2,
        ..Default::default()
    };
    let manifest = run_batch(samples, &backend, &agents, &config, |t| {
        println!(
            "{:<5} -> {:<8} rounds: {}",
            t.sample_id,
            t.final_answer,
            1 + t.round2_prompt.is_some() as u8
        );
    });
    println!(
        "\n{}",
        serde_json::to_string_pretty(&manifest.counts).unwrap()
    );
}
