//! Compose round-one and round-two prompts, with and without positions.
//!
//! `cargo run --example compose_prompts`

use groundloop::model::{ClueSet, ImageRef, NormalizedBox, Query, TextClue};
use groundloop::prompt::{compose_round_one, compose_round_two, ComposerOptions};

fn main() {
    let image = ImageRef::new("sign", 1200, 900, "sign.jpg").unwrap();
    let query = Query::new(
        image,
        "What is the speed limit?",
        Some("Answer the question using a single word or phrase.".into()),
        vec![],
    )
    .unwrap();
    println!(
        "--- round one ---\n{}\n",
        compose_round_one(&query).render_text()
    );

    let clues = ClueSet {
        text_clues: vec![
            TextClue::new(
                "SPEED LIMIT",
                NormalizedBox::new(0.4, 0.2, 0.6, 0.3).unwrap(),
            )
            .unwrap(),
            TextClue::new("45", NormalizedBox::new(0.45, 0.32, 0.55, 0.5).unwrap()).unwrap(),
        ],
        text_agent_ran: true,
        ..Default::default()
    };
    for include_positions in [true, false] {
        let doc =
            compose_round_two(&query, &clues, &ComposerOptions { include_positions }).unwrap();
        println!(
            "--- round two (positions: {include_positions}) ---\n{}\n",
            doc.render_text()
        );
    }
}
