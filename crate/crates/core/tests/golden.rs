//! Round-two prompts for the documented scenarios, byte for byte.

mod common;

use groundloop::prompt::{compose_round_two, ComposerOptions, OBJECT_TOKEN};

#[test]
fn golden_prompts_match() {
    for s in common::golden_scenarios() {
        let doc = compose_round_two(&s.query, &s.clues(), &ComposerOptions::default()).unwrap();
        assert_eq!(
            doc.render_text(),
            common::golden(s.name),
            "scenario {}",
            s.name
        );
        assert!(doc.is_well_formed(), "scenario {}", s.name);
    }
}

#[test]
fn buttons_prompt_binds_four_crops_in_placeholder_order() {
    let s = common::buttons();
    let doc = compose_round_two(&s.query, &s.clues(), &ComposerOptions::default()).unwrap();
    assert_eq!(doc.object_slots(), 4);
    assert_eq!(doc.render_text().matches(OBJECT_TOKEN).count(), 4);
}

#[test]
fn dropping_positions_only_removes_location_clauses() {
    for s in common::golden_scenarios() {
        let clues = s.clues();
        let with = compose_round_two(&s.query, &clues, &ComposerOptions::default()).unwrap();
        let without = compose_round_two(
            &s.query,
            &clues,
            &ComposerOptions {
                include_positions: false,
            },
        )
        .unwrap();
        let mut stripped = with.render_text();
        while let Some(start) = stripped.find(" at location [") {
            let mut end = start + " at location ".len();
            // consume "[..]" possibly followed by ", [..]"
            loop {
                end += stripped[end..].find(']').unwrap() + 1;
                if stripped[end..].starts_with(", [") {
                    end += 2;
                } else {
                    break;
                }
            }
            stripped.replace_range(start..end, "");
        }
        assert_eq!(stripped, without.render_text(), "scenario {}", s.name);
        assert_eq!(with.object_slots(), without.object_slots());
    }
}
