//! Classify round-one replies and render agent-call refusals.
//!
//! `cargo run --example parse_refusal`

use groundloop::parser::{classify_round_one, render_refusal, AgentCallRequest, RoundOneOutcome};

fn main() {
    let replies = [
        "B",
        "Sorry, I cannot answer the question. Some visual information about the following objects is missing or unclear: paper clip, button.",
        "Sorry, I cannot answer the question. Some visual information about the following objects is missing or unclear: text in the image.",
        "sorry, i cannot answer the question.  Some visual information about the following objects is missing or unclear: mug, text in the image.",
    ];
    for raw in replies {
        match classify_round_one(raw) {
            Ok(RoundOneOutcome::Direct { answer }) => println!("direct answer: {answer}"),
            Ok(RoundOneOutcome::Call { request }) => println!(
                "agent call: objects {:?}, text {}",
                request.object_classes(),
                request.wants_text()
            ),
            Err(e) => println!("unusable: {e}"),
        }
    }

    let request = AgentCallRequest::new(vec!["street sign".into()], true).unwrap();
    println!("\nrendered: {}", render_refusal(&request));
}
