//! Visual-token routing between the MLP and Resampler projections, and the
//! context budget that caps how many OCR clues fit into a round-two prompt.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TextClue;
use crate::prompt::PromptDocument;

pub const MLP_TOKENS: usize = 256;
pub const RESAMPLER_TOKENS: usize = 32;
/// Above this many objects, object crops go through the Resampler too.
pub const MLP_OBJECT_LIMIT: usize = 4;
pub const DEFAULT_CONTEXT_LIMIT: usize = 2048;
pub const DEFAULT_CHARS_PER_TOKEN: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RouterError {
    #[error("routing plan expects {plan} object crops but the prompt has {doc}")]
    PlanMismatch { plan: usize, doc: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Mlp,
    Resampler,
}

impl Projection {
    pub fn tokens(self) -> usize {
        match self {
            Projection::Mlp => MLP_TOKENS,
            Projection::Resampler => RESAMPLER_TOKENS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingPlan {
    pub global_projection: Projection,
    pub object_projection: Option<Projection>,
    pub tokens_global: usize,
    pub tokens_per_object: usize,
    pub object_count: usize,
}

impl RoutingPlan {
    pub fn visual_tokens(&self) -> usize {
        self.tokens_global + self.tokens_per_object * self.object_count
    }
}

/// Choose projections for a prompt carrying `object_count` crops.
///
/// No crops: the global image goes through the MLP. One to four crops: crops
/// through the MLP, global image downsampled. More: everything downsampled.
pub fn route_projection(object_count: usize) -> RoutingPlan {
    let (global, object) = match object_count {
        0 => (Projection::Mlp, None),
        1..=MLP_OBJECT_LIMIT => (Projection::Resampler, Some(Projection::Mlp)),
        _ => (Projection::Resampler, Some(Projection::Resampler)),
    };
    RoutingPlan {
        global_projection: global,
        object_projection: object,
        tokens_global: global.tokens(),
        tokens_per_object: object.map_or(0, Projection::tokens),
        object_count,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    pub context_limit: usize,
    pub chars_per_token: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            context_limit: DEFAULT_CONTEXT_LIMIT,
            chars_per_token: DEFAULT_CHARS_PER_TOKEN,
        }
    }
}

impl Budget {
    pub fn text_tokens(&self, chars: usize) -> usize {
        (chars as f64 / self.chars_per_token).ceil() as usize
    }
}

/// Visual tokens from `plan` plus the estimated text tokens of `doc`.
pub fn estimate_tokens(
    doc: &PromptDocument,
    plan: &RoutingPlan,
    budget: &Budget,
) -> Result<usize, RouterError> {
    let slots = doc.object_slots();
    if plan.object_count != slots {
        return Err(RouterError::PlanMismatch {
            plan: plan.object_count,
            doc: slots,
        });
    }
    Ok(plan.visual_tokens() + budget.text_tokens(doc.text_chars()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    pub kept: Vec<TextClue>,
    pub dropped: usize,
    /// Estimate of the document built from `kept`.
    pub tokens: usize,
}

/// Keep the longest prefix of `clues` whose prompt fits the context limit.
///
/// `build` renders the prompt for a candidate prefix. The walk stops at the
/// first clue that would overflow; later clues are dropped even if shorter,
/// so the kept set is always a prefix in OCR order.
pub fn truncate_text_clues<F>(
    clues: &[TextClue],
    build: F,
    budget: &Budget,
) -> Result<Truncation, RouterError>
where
    F: Fn(&[TextClue]) -> PromptDocument,
{
    let measure = |n: usize| -> Result<usize, RouterError> {
        let doc = build(&clues[..n]);
        estimate_tokens(&doc, &route_projection(doc.object_slots()), budget)
    };
    let mut kept = 0;
    let mut tokens = measure(0)?;
    while kept < clues.len() {
        let next = measure(kept + 1)?;
        if next > budget.context_limit {
            break;
        }
        kept += 1;
        tokens = next;
    }
    Ok(Truncation {
        kept: clues[..kept].to_vec(),
        dropped: clues.len() - kept,
        tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ImageRef, NormalizedBox};
    use crate::prompt::{format_text_block, ComposerOptions, Segment};

    fn doc(text: &str, objects: usize) -> PromptDocument {
        let img = ImageRef::new("i", 10, 10, "i").unwrap();
        let mut segments = vec![Segment::ImageSlot(img.clone()), Segment::Text(text.into())];
        segments.extend((0..objects).map(|_| Segment::ObjectSlot(img.clone())));
        PromptDocument { segments }
    }

    #[test]
    fn routing_regimes() {
        let p = route_projection(0);
        assert_eq!(p.global_projection, Projection::Mlp);
        assert_eq!(p.object_projection, None);
        assert_eq!(p.visual_tokens(), 256);
        assert_eq!(route_projection(1).visual_tokens(), 288);
        assert_eq!(route_projection(3).visual_tokens(), 800);
        assert_eq!(route_projection(4).visual_tokens(), 1056);
        assert_eq!(route_projection(5).visual_tokens(), 192);
        assert_eq!(
            route_projection(5).object_projection,
            Some(Projection::Resampler)
        );
    }

    #[test]
    fn estimate_examples() {
        let b = Budget::default();
        assert_eq!(
            estimate_tokens(&doc("", 0), &route_projection(0), &b),
            Ok(256)
        );
        let text = "x".repeat(400);
        assert_eq!(
            estimate_tokens(&doc(&text, 0), &route_projection(0), &b),
            Ok(356)
        );
        assert_eq!(
            estimate_tokens(&doc("abc", 0), &route_projection(0), &b),
            Ok(257)
        );
        assert_eq!(
            estimate_tokens(&doc("", 2), &route_projection(3), &b),
            Err(RouterError::PlanMismatch { plan: 3, doc: 2 })
        );
    }

    fn clue(content: &str) -> TextClue {
        TextClue::new(content, NormalizedBox::new(0.1, 0.2, 0.3, 0.4).unwrap()).unwrap()
    }

    fn builder(opts: ComposerOptions) -> impl Fn(&[TextClue]) -> PromptDocument {
        move |cl: &[TextClue]| doc(&format_text_block(cl, &opts), 0)
    }

    #[test]
    fn everything_fits() {
        let clues: Vec<_> = ["a", "b", "c"].iter().map(|c| clue(c)).collect();
        let t = truncate_text_clues(
            &clues,
            builder(ComposerOptions::default()),
            &Budget::default(),
        )
        .unwrap();
        assert_eq!(t.dropped, 0);
        assert_eq!(t.kept, clues);
    }

    #[test]
    fn greedy_prefix_on_tight_budget() {
        // Header 42 chars + "\n" + "Text in the image: " (19) + "." = 63.
        // Each entry "'wordN' at location [0.10, 0.20, 0.30, 0.40]" is 44 chars,
        // joined by "; ". Two entries: 63 + 88 + 2 = 153 chars -> 39 tokens;
        // three: 63 + 132 + 4 = 199 -> 50 tokens. Limit 256 + 39 keeps exactly two.
        let clues: Vec<_> = ["word1", "word2", "word3", "word4", "word5"]
            .iter()
            .map(|c| clue(c))
            .collect();
        let two = format_text_block(&clues[..2], &ComposerOptions::default());
        assert_eq!(two.chars().count(), 153);
        let budget = Budget {
            context_limit: 256 + 39,
            ..Budget::default()
        };
        let t = truncate_text_clues(&clues, builder(ComposerOptions::default()), &budget).unwrap();
        assert_eq!(t.kept, clues[..2].to_vec());
        assert_eq!(t.dropped, 3);
        assert_eq!(t.tokens, 295);
    }

    #[test]
    fn dropping_positions_admits_more_clues() {
        let clues: Vec<_> = (0..40).map(|i| clue(&format!("line {i}"))).collect();
        let budget = Budget {
            context_limit: 700,
            ..Budget::default()
        };
        let with =
            truncate_text_clues(&clues, builder(ComposerOptions::default()), &budget).unwrap();
        let without = truncate_text_clues(
            &clues,
            builder(ComposerOptions {
                include_positions: false,
            }),
            &budget,
        )
        .unwrap();
        assert!(without.kept.len() >= with.kept.len());
        assert!(without.kept.len() > with.kept.len());
    }
}
