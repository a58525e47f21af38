//! Score final answers against gold labels and print the metrics table.
//!
//! `cargo run --example evaluate`

use groundloop::eval::{extract_choice, render_table, score, BenchmarkItem};
use groundloop::model::{ChoiceOption, ImageRef};
use groundloop::orchestrator::Trace;

fn main() {
    let options: Vec<ChoiceOption> = ["red", "green", "blue"]
        .iter()
        .zip('A'..)
        .map(|(t, letter)| ChoiceOption {
            letter,
            text: t.to_string(),
        })
        .collect();
    for answer in ["B", "(C).", "It is green.", "no idea"] {
        println!("{answer:>14} -> {:?}", extract_choice(answer, &options));
    }

    let image = ImageRef::new("img", 100, 100, "img.jpg").unwrap();
    let item =
        |id: &str, options: Option<Vec<ChoiceOption>>, gold: &str, tag: &str| BenchmarkItem {
            id: id.into(),
            image: image.clone(),
            question: "q".into(),
            options,
            gold: gold.into(),
            tags: vec![tag.into()],
            hint: None,
        };
    let items = vec![
        item("a", Some(options.clone()), "B", "color"),
        item("b", Some(options.clone()), "C", "color"),
        item("c", None, "4.1%", "text"),
        item("d", None, "Jane", "text"),
    ];
    let traces: Vec<Trace> = [("a", "B"), ("b", "red"), ("c", "4.1%."), ("d", "jane")]
        .iter()
        .map(|(id, answer)| {
            let mut t = Trace::new(*id);
            t.final_answer = answer.to_string();
            t
        })
        .collect();
    let metrics = score(&traces, &items).unwrap();
    println!("\n{}", render_table(&metrics));
}
