//! Benchmark loading, answer scoring and the routing / simple-hard analyses.
//!
//! Multiple-choice answers are reduced to an option letter; open answers are
//! compared by normalized exact match. Unparseable answers count as wrong.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ChoiceOption, ImageRef, Query, OPTION_LETTERS};
use crate::orchestrator::{RoutingHistogram, Sample, Trace};

pub const MC_HINT: &str = "Answer with the option's letter from the given choices directly.";
pub const OPEN_HINT: &str = "Answer the question using a single word or phrase.";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no benchmark item for trace id(s): {0:?}")]
    MissingGold(Vec<String>),
    #[error("no reference prediction for item id(s): {0:?}")]
    MissingReference(Vec<String>),
    #[error("{path}:{line}: {message}")]
    Dataset {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub id: String,
    pub image: ImageRef,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<ChoiceOption>>,
    pub gold: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
}

impl BenchmarkItem {
    pub fn is_multiple_choice(&self) -> bool {
        self.options.as_ref().is_some_and(|o| !o.is_empty())
    }

    /// The query sent to the backend. Without an explicit hint, multiple-choice
    /// items ask for the option letter and open items for a short phrase.
    pub fn to_sample(&self) -> Sample {
        let hint = match &self.hint {
            Some(h) => Some(h.clone()),
            None if self.is_multiple_choice() => Some(MC_HINT.to_string()),
            None => Some(OPEN_HINT.to_string()),
        };
        Sample {
            id: self.id.clone(),
            query: Query {
                image: self.image.clone(),
                question: self.question.clone(),
                answer_format_hint: hint.filter(|h| !h.is_empty()),
                options: self.options.clone().unwrap_or_default(),
            },
        }
    }

    pub fn is_correct(&self, answer: &str) -> bool {
        match &self.options {
            Some(opts) if !opts.is_empty() => extract_choice(answer, opts)
                .is_some_and(|c| self.gold.trim().eq_ignore_ascii_case(&c.to_string())),
            _ => normalize_open_answer(answer) == normalize_open_answer(&self.gold),
        }
    }
}

/// Dataset line as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub image_path: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<ChoiceOption>>,
    pub answer: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
}

impl DatasetRecord {
    /// Resolve into an item. Missing dimensions are read from the image file
    /// header; relative paths are taken relative to `base`.
    pub fn into_item(self, base: &Path) -> Result<BenchmarkItem, String> {
        let path = {
            let p = PathBuf::from(&self.image_path);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let (width, height) = match (self.width, self.height) {
            (Some(w), Some(h)) => (w, h),
            _ => image::image_dimensions(&path)
                .map_err(|e| format!("cannot read dimensions of {}: {e}", path.display()))?,
        };
        let image_id = self.image_id.clone().unwrap_or_else(|| {
            Path::new(&self.image_path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.id.clone())
        });
        let image = ImageRef::new(image_id, width, height, path.display().to_string())
            .map_err(|e| e.to_string())?;
        if let Some(opts) = &self.options {
            let q = Query::new(image.clone(), self.question.clone(), None, opts.clone())
                .map_err(|e| e.to_string())?;
            let gold = self.answer.trim();
            if !q
                .options
                .iter()
                .any(|o| gold.eq_ignore_ascii_case(&o.letter.to_string()))
            {
                return Err(format!("answer `{gold}` is not one of the option letters"));
            }
        } else if self.question.trim().is_empty() {
            return Err("question must not be empty".into());
        }
        Ok(BenchmarkItem {
            id: self.id,
            image,
            question: self.question,
            options: self.options,
            gold: self.answer,
            tags: self.tags,
            hint: self.hint,
        })
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<BenchmarkItem>, EvalError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(shown.clone(), e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut items = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EvalError::Dataset {
            path: shown.clone(),
            line: i + 1,
            message,
        };
        let rec: DatasetRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if !seen.insert(rec.id.clone()) {
            return Err(err(format!("duplicate id `{}`", rec.id)));
        }
        items.push(rec.into_item(base).map_err(err)?);
    }
    Ok(items)
}

fn strip_punct(s: &str) -> &str {
    s.trim_matches(|c: char| !c.is_alphanumeric())
}

fn normalize_words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Option letter named by a free-form answer.
///
/// The first standalone option letter wins ("C.", "(B)", "Answer: D"). Failing
/// that, an option whose full text appears word-for-word in the answer is
/// chosen, the longest one if several do; equal-length ties give `None`.
pub fn extract_choice(answer: &str, options: &[ChoiceOption]) -> Option<char> {
    let letters: Vec<char> = options.iter().map(|o| o.letter).collect();
    for token in answer.split_whitespace() {
        let mut chars = strip_punct(token).chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if letters.contains(&c) {
                return Some(c);
            }
        }
    }

    let answer_words = normalize_words(answer);
    let mut best: Option<(usize, char)> = None;
    let mut tied = false;
    for opt in options {
        let words = normalize_words(&opt.text);
        if words.is_empty() || words.len() > answer_words.len() {
            continue;
        }
        if answer_words
            .windows(words.len())
            .any(|w| w == words.as_slice())
        {
            match best {
                Some((len, _)) if len > words.len() => {}
                Some((len, _)) if len == words.len() => tied = true,
                _ => {
                    best = Some((words.len(), opt.letter));
                    tied = false;
                }
            }
        }
    }
    if tied {
        return None;
    }
    best.map(|(_, c)| c).filter(|c| OPTION_LETTERS.contains(c))
}

/// Lowercase, collapse whitespace, strip terminal punctuation.
pub fn normalize_open_answer(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| {
            matches!(c, '.' | ',' | ';' | ':' | '!' | '?') || c.is_whitespace()
        })
        .to_lowercase()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TagMetrics {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub unparseable_choices: usize,
    pub errors: usize,
    pub per_tag: BTreeMap<String, TagMetrics>,
    pub routing: RoutingHistogram,
}

fn ratio(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Score traces against their items. Every trace id must name an item.
pub fn score(traces: &[Trace], items: &[BenchmarkItem]) -> Result<Metrics, EvalError> {
    let by_id: BTreeMap<&str, &BenchmarkItem> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    let missing: Vec<String> = traces
        .iter()
        .filter(|t| !by_id.contains_key(t.sample_id.as_str()))
        .map(|t| t.sample_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingGold(missing));
    }

    let mut correct = 0;
    let mut unparseable = 0;
    let mut errors = 0;
    let mut per_tag: BTreeMap<String, TagMetrics> = BTreeMap::new();
    for trace in traces {
        let item = by_id[trace.sample_id.as_str()];
        if trace.is_error() {
            errors += 1;
        }
        if let Some(opts) = item.options.as_ref().filter(|o| !o.is_empty()) {
            if extract_choice(&trace.final_answer, opts).is_none() {
                unparseable += 1;
            }
        }
        let ok = item.is_correct(&trace.final_answer);
        correct += usize::from(ok);
        for tag in &item.tags {
            let m = per_tag.entry(tag.clone()).or_default();
            m.total += 1;
            m.correct += usize::from(ok);
        }
    }
    for m in per_tag.values_mut() {
        m.accuracy = ratio(m.correct, m.total);
    }
    Ok(Metrics {
        accuracy: ratio(correct, traces.len()),
        correct,
        total: traces.len(),
        unparseable_choices: unparseable,
        errors,
        per_tag,
        routing: traces.iter().collect(),
    })
}

/// Partition item ids by whether the reference model got them right.
pub fn split_simple_hard(
    items: &[BenchmarkItem],
    reference: &BTreeMap<String, String>,
) -> Result<(Vec<String>, Vec<String>), EvalError> {
    let missing: Vec<String> = items
        .iter()
        .filter(|i| !reference.contains_key(&i.id))
        .map(|i| i.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingReference(missing));
    }
    let (simple, hard): (Vec<&BenchmarkItem>, Vec<&BenchmarkItem>) =
        items.iter().partition(|i| i.is_correct(&reference[&i.id]));
    Ok((
        simple.into_iter().map(|i| i.id.clone()).collect(),
        hard.into_iter().map(|i| i.id.clone()).collect(),
    ))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReferenceRecord {
    id: String,
    answer: String,
}

/// Reference predictions, one `{id, answer}` object per line.
pub fn load_reference(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>, EvalError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(shown.clone(), e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ReferenceRecord = serde_json::from_str(line).map_err(|e| EvalError::Dataset {
            path: shown.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.insert(rec.id, rec.answer);
    }
    Ok(out)
}

pub fn render_table(metrics: &Metrics) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>8} {:>8} {:>9}\n",
        "split", "correct", "total", "accuracy"
    ));
    out.push_str(&format!(
        "{:<16} {:>8} {:>8} {:>8.2}%\n",
        "all",
        metrics.correct,
        metrics.total,
        metrics.accuracy * 100.0
    ));
    for (tag, m) in &metrics.per_tag {
        out.push_str(&format!(
            "{:<16} {:>8} {:>8} {:>8.2}%\n",
            tag,
            m.correct,
            m.total,
            m.accuracy * 100.0
        ));
    }
    let r = &metrics.routing;
    out.push_str(&format!(
        "routing: direct {} | ocr only {} | grounding only {} | both {}\n",
        r.direct, r.ocr_only, r.grounding_only, r.both
    ));
    out
}
