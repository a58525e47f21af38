//! Shared scenarios for the integration and acceptance tests.
//!
//! Every scenario stores agent replies in pixels (normalized value times image
//! size), the same way a live agent or a fixture file would deliver them.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use groundloop::agents::{
    ground_objects, ocr_texts, AgentEndpoint, AgentKind, FixtureAgent, FixtureRecord, RawDetection,
    RawText, Transport,
};
use groundloop::model::{ChoiceOption, ClueSet, ImageRef, Query, OPTION_LETTERS};
use groundloop::orchestrator::Script;
use groundloop::parser::{render_refusal, AgentCallRequest};

pub const MC_HINT: &str = "Answer with the option's letter from the given choices directly.";
pub const SHORT_HINT: &str = "Answer the question using a single word or phrase.";

pub struct Scenario {
    pub name: &'static str,
    pub query: Query,
    pub request: AgentCallRequest,
    pub detections: Vec<RawDetection>,
    pub texts: Vec<RawText>,
}

fn px(image: &ImageRef, b: [f64; 4]) -> [f64; 4] {
    let (w, h) = (image.width as f64, image.height as f64);
    [b[0] * w, b[1] * h, b[2] * w, b[3] * h]
}

fn det(image: &ImageRef, class: &str, b: [f64; 4], score: f64) -> RawDetection {
    RawDetection {
        class: class.into(),
        bbox: px(image, b),
        score,
    }
}

fn text(image: &ImageRef, content: &str, b: [f64; 4]) -> RawText {
    RawText {
        content: content.into(),
        bbox: px(image, b),
    }
}

pub fn options(texts: &[&str]) -> Vec<ChoiceOption> {
    texts
        .iter()
        .zip(OPTION_LETTERS)
        .map(|(t, l)| ChoiceOption {
            letter: l,
            text: t.to_string(),
        })
        .collect()
}

fn query(image: ImageRef, q: &str, hint: Option<&str>, opts: Vec<ChoiceOption>) -> Query {
    Query::new(image, q, hint.map(str::to_string), opts).unwrap()
}

pub fn buttons() -> Scenario {
    let img = ImageRef::new("buttons", 2000, 1500, "buttons.jpg").unwrap();
    let detections = vec![
        det(&img, "button", [0.25, 0.63, 0.26, 0.64], 0.81),
        det(&img, "button", [0.47, 0.59, 0.48, 0.60], 0.74),
        det(&img, "paper clip", [0.65, 0.70, 0.66, 0.71], 0.66),
        det(&img, "button", [0.52, 0.62, 0.53, 0.63], 0.52),
        // below the score threshold
        det(&img, "button", [0.10, 0.10, 0.12, 0.12], 0.21),
    ];
    Scenario {
        name: "buttons",
        query: query(
            img,
            "Are all buttons in the image larger than the paper clips?",
            Some(SHORT_HINT),
            vec![],
        ),
        request: AgentCallRequest::objects(&["button", "paper clip"]).unwrap(),
        detections,
        texts: vec![],
    }
}

pub fn letter() -> Scenario {
    let img = ImageRef::new("letter", 1700, 2200, "letter.png").unwrap();
    let texts = vec![
        text(&img, "May311918", [0.66, 0.043, 0.931, 0.077]),
        text(&img, "3379Bark Jane Rd", [0.545, 0.103, 0.921, 0.131]),
    ];
    Scenario {
        name: "letter",
        query: query(img, "By whom is this letter written?", None, vec![]),
        request: AgentCallRequest::text(),
        detections: vec![],
        texts,
    }
}

pub fn case1() -> Scenario {
    let img = ImageRef::new("case1", 3264, 2448, "case1.jpg").unwrap();
    Scenario {
        name: "case1",
        detections: vec![det(&img, "bowl", [0.891, 0.184, 0.999, 0.328], 0.58)],
        query: query(
            img,
            "What is the color of the bowl on the counter?",
            Some(MC_HINT),
            options(&["Blue", "Green", "White", "Silver"]),
        ),
        request: AgentCallRequest::objects(&["bowl"]).unwrap(),
        texts: vec![],
    }
}

pub fn case2() -> Scenario {
    let img = ImageRef::new("case2", 2048, 1536, "case2.jpg").unwrap();
    Scenario {
        name: "case2",
        detections: vec![det(&img, "guitar", [0.336, 0.484, 0.690, 0.846], 0.47)],
        query: query(
            img,
            "Is there any musical instrument seen on the stage?",
            Some(MC_HINT),
            options(&[
                "No, there isn't.",
                "Yes, there is a drum.",
                "Yes, there is a guitar.",
                "Yes, there is a piano.",
            ]),
        ),
        request: AgentCallRequest::objects(&["guitar"]).unwrap(),
        texts: vec![],
    }
}

pub fn case3() -> Scenario {
    let img = ImageRef::new("case3", 736, 938, "case3.jpg").unwrap();
    Scenario {
        name: "case3",
        query: query(
            img,
            "How would you describe the general appearance of the buildings in the photo?",
            Some(MC_HINT),
            options(&[
                "Modern and sleek",
                "Colorful and unique",
                "Industrial and metallic",
                "Old and brick",
            ]),
        ),
        request: AgentCallRequest::text(),
        detections: vec![],
        texts: vec![],
    }
}

pub fn case4() -> Scenario {
    let img = ImageRef::new("case4", 550, 1200, "case4.jpg").unwrap();
    let texts = vec![
        text(&img, "CARLING", [0.227, 0.333, 0.757, 0.454]),
        text(&img, "OFTASTE AND", [0.330, 0.614, 0.623, 0.629]),
        text(&img, "ALC4.1%VOL", [0.340, 0.743, 0.619, 0.764]),
        text(&img, "ENJOY EXTRA", [0.373, 0.767, 0.588, 0.781]),
        text(&img, "COLD", [0.433, 0.780, 0.522, 0.791]),
    ];
    Scenario {
        name: "case4",
        query: query(img, "How much alcohol is in this beverage?", None, vec![]),
        request: AgentCallRequest::text(),
        detections: vec![],
        texts,
    }
}

pub fn golden_scenarios() -> Vec<Scenario> {
    vec![buttons(), letter(), case1(), case2(), case3(), case4()]
}

impl Scenario {
    pub fn fixture_records(&self) -> Vec<FixtureRecord> {
        let id = self.query.image.id.clone();
        let mut out = Vec::new();
        if self.request.wants_grounding() {
            out.push(FixtureRecord::grounding(
                id.clone(),
                self.detections.clone(),
            ));
        }
        if self.request.wants_text() {
            out.push(FixtureRecord::ocr(id, self.texts.clone()));
        }
        out
    }

    /// Clues as the gateway would produce them from the recorded replies.
    pub fn clues(&self) -> ClueSet {
        let agent = Arc::new(FixtureAgent::from_records(self.fixture_records()).unwrap());
        let t = Transport::InProcess("scenario".into());
        let mut clues = ClueSet::default();
        if self.request.wants_grounding() {
            let ep = AgentEndpoint::new(AgentKind::Grounding, t.clone(), agent.clone());
            let (res, _) =
                ground_objects(&self.query.image, self.request.object_classes(), &ep).unwrap();
            clues.object_groups = res.groups;
            clues.undetected_classes = res.undetected_classes;
        }
        if self.request.wants_text() {
            let ep = AgentEndpoint::new(AgentKind::Ocr, t, agent);
            let (texts, _) = ocr_texts(&self.query.image, &ep).unwrap();
            clues.text_clues = texts;
            clues.text_agent_ran = true;
        }
        clues
    }

    pub fn refusal(&self) -> String {
        render_refusal(&self.request)
    }
}

pub fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.txt"));
    let text = std::fs::read_to_string(&path).unwrap();
    text.strip_suffix('\n').unwrap_or(&text).to_string()
}

/// One sample of the end-to-end fixture.
pub struct E2eSample {
    pub id: String,
    pub scenario: Scenario,
    /// False when round one answers directly.
    pub called: bool,
    pub final_answer: String,
    pub gold: String,
    pub tags: Vec<&'static str>,
}

fn direct(id: &str, q: &str, answer: &str, gold: &str) -> E2eSample {
    let img = ImageRef::new(id, 640, 480, format!("{id}.jpg")).unwrap();
    E2eSample {
        id: id.into(),
        scenario: Scenario {
            name: "direct",
            query: query(img, q, Some(SHORT_HINT), vec![]),
            request: AgentCallRequest::text(),
            detections: vec![],
            texts: vec![],
        },
        called: false,
        final_answer: answer.into(),
        gold: gold.into(),
        tags: vec!["direct"],
    }
}

fn called(mut s: Scenario, id: &str, answer: &str, gold: &str, tag: &'static str) -> E2eSample {
    // every sample needs its own image id for the scripted backend
    s.query.image.id = id.to_string();
    E2eSample {
        id: id.into(),
        scenario: s,
        called: true,
        final_answer: answer.into(),
        gold: gold.into(),
        tags: vec![tag],
    }
}

fn both() -> Scenario {
    let img = ImageRef::new("both", 1200, 900, "both.jpg").unwrap();
    Scenario {
        name: "both",
        detections: vec![
            det(&img, "sheep", [0.10, 0.50, 0.18, 0.60], 0.9),
            det(&img, "sheep", [0.30, 0.52, 0.36, 0.61], 0.8),
        ],
        texts: vec![text(&img, "FARM 12", [0.70, 0.05, 0.90, 0.08])],
        query: query(
            img,
            "What number is on the sign above the sheep?",
            Some(SHORT_HINT),
            vec![],
        ),
        request: AgentCallRequest::new(vec!["sheep".into()], true).unwrap(),
    }
}

fn extra_grounding(id: &str, class: &str) -> Scenario {
    let img = ImageRef::new(id, 1600, 1200, format!("{id}.jpg")).unwrap();
    Scenario {
        name: "grounding",
        detections: vec![det(&img, class, [0.40, 0.40, 0.45, 0.47], 0.77)],
        texts: vec![],
        query: query(
            img,
            &format!("What color is the {class}?"),
            Some(SHORT_HINT),
            vec![],
        ),
        request: AgentCallRequest::objects(&[class, "lamp"]).unwrap(),
    }
}

/// 4 direct, 4 grounding, 3 OCR, 1 both.
pub fn e2e_samples() -> Vec<E2eSample> {
    vec![
        direct("d0", "Is it daytime?", "Yes", "yes"),
        called(buttons(), "g0", "No", "no", "objects"),
        called(letter(), "o0", "Jane Bark", "Jane Bark", "texts"),
        direct("d1", "How many people are there?", "2", "2"),
        called(case1(), "g1", "D", "D", "objects"),
        called(case4(), "o1", "4.1%", "4.1%", "texts"),
        called(both(), "b0", "12", "12", "texts"),
        direct("d2", "What animal is shown?", "cat", "dog"),
        called(case2(), "g2", "C", "C", "objects"),
        called(case3(), "o2", "D", "D", "texts"),
        called(extra_grounding("g3", "mug"), "g3", "blue", "red", "objects"),
        direct("d3", "Is the door open?", "No", "no"),
    ]
}

impl E2eSample {
    pub fn script(&self) -> Script {
        let image_id = self.scenario.query.image.id.clone();
        if self.called {
            Script {
                image_id,
                round1: self.scenario.refusal(),
                round2: Some(self.final_answer.clone()),
                ..Default::default()
            }
        } else {
            Script {
                image_id,
                round1: self.final_answer.clone(),
                ..Default::default()
            }
        }
    }

    pub fn dataset_line(&self) -> serde_json::Value {
        let q = &self.scenario.query;
        let mut v = serde_json::json!({
            "id": self.id,
            "image_path": q.image.source,
            "image_id": q.image.id,
            "width": q.image.width,
            "height": q.image.height,
            "question": q.question,
            "answer": self.gold,
            "tags": self.tags,
            "hint": q.answer_format_hint.clone().unwrap_or_default(),
        });
        if !q.options.is_empty() {
            v["options"] = serde_json::to_value(&q.options).unwrap();
        }
        v
    }
}

pub struct E2eFiles {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub dataset: PathBuf,
}

fn write_lines(path: &Path, rows: impl IntoIterator<Item = String>) {
    let mut text = String::new();
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

/// Write dataset, scripts, fixtures and a config into `dir`.
pub fn write_e2e(dir: &Path, samples: &[E2eSample]) -> E2eFiles {
    let dataset = dir.join("dataset.jsonl");
    write_lines(
        &dataset,
        samples.iter().map(|s| s.dataset_line().to_string()),
    );
    write_lines(
        &dir.join("script.jsonl"),
        samples
            .iter()
            .map(|s| serde_json::to_string(&s.script()).unwrap()),
    );
    write_lines(
        &dir.join("fixtures.jsonl"),
        samples
            .iter()
            .filter(|s| s.called)
            .flat_map(|s| s.scenario.fixture_records())
            .map(|r| serde_json::to_string(&r).unwrap()),
    );
    let config = dir.join("groundloop.toml");
    std::fs::write(
        &config,
        r#"[backend]
model = "scripted-7b"
script = "script.jsonl"
retry_limit = 0
backoff_base_ms = 0

[agents.grounding]
fixture = "fixtures.jsonl"

[agents.ocr]
fixture = "fixtures.jsonl"

[paths]
dataset = "dataset.jsonl"
output = "out"
"#,
    )
    .unwrap();
    E2eFiles {
        dir: dir.to_path_buf(),
        config,
        dataset,
    }
}
