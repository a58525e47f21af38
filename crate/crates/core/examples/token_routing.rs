//! Visual token routing by object count, and budget-driven text truncation.
//!
//! `cargo run --example token_routing`

use groundloop::model::{ClueSet, ImageRef, NormalizedBox, Query, TextClue};
use groundloop::prompt::{compose_round_two, ComposerOptions};
use groundloop::router::{route_projection, truncate_text_clues, Budget};

fn main() {
    println!("objects  visual tokens");
    for k in 0..=8 {
        println!("{k:>7}  {:>13}", route_projection(k).visual_tokens());
    }

    let image = ImageRef::new("page", 1700, 2200, "page.png").unwrap();
    let query = Query::new(image, "Who signed the letter?", None, vec![]).unwrap();
    let clues: Vec<TextClue> = (0..400)
        .map(|i| {
            let y = (i as f64 * 0.002).min(0.98);
            let b = NormalizedBox::new(0.1, y, 0.9, y + 0.01).unwrap();
            TextClue::new(format!("line {i} of the scanned letter body"), b).unwrap()
        })
        .collect();
    let build = |kept: &[TextClue]| {
        let set = ClueSet {
            text_clues: kept.to_vec(),
            text_agent_ran: true,
            ..Default::default()
        };
        compose_round_two(&query, &set, &ComposerOptions::default()).unwrap()
    };
    let budget = Budget::default();
    let t = truncate_text_clues(&clues, build, &budget).unwrap();
    println!(
        "\n{} text clues: kept {}, dropped {}, {} of {} tokens",
        clues.len(),
        t.kept.len(),
        t.dropped,
        t.tokens,
        budget.context_limit
    );
}
