//! Build training records and benchmark items from candidate images.
//!
//! `cargo run --example curate`

use groundloop::curation::{audit, build_benchmark_item, curate, CandidateRecord, Quotas};
use groundloop::prompt::ComposerOptions;

const CANDIDATES: [&str; 3] = [
    r#"{"image_id": "receipt", "width": 900, "height": 1400, "question": "What is the total?", "answer": "12.50", "texts": [{"content": "TOTAL 12.50", "box": [100, 1200, 400, 1215]}], "detections": []}"#,
    r#"{"image_id": "kitchen", "width": 1024, "height": 768, "question": "What color is the kettle?", "answer": "silver", "texts": [], "detections": [{"class": "kettle", "box": [500, 300, 560, 380], "score": 0.88}, {"class": "cup", "box": [100, 400, 140, 450], "score": 0.64}]}"#,
    r#"{"image_id": "beach", "width": 640, "height": 480, "question": "Is it sunny?", "answer": "yes", "texts": [], "detections": []}"#,
];

fn main() {
    let samples: Vec<_> = CANDIDATES
        .iter()
        .map(|line| {
            serde_json::from_str::<CandidateRecord>(line)
                .unwrap()
                .into_sample()
                .unwrap()
        })
        .collect();

    let (records, manifest) =
        curate(&samples, Quotas::default(), &ComposerOptions::default()).unwrap();
    for r in &records {
        println!(
            "{:<8} {:?} {:?}\n  target: {}",
            r.source_id, r.track, r.record.polarity, r.record.target
        );
    }
    println!("\n{}", serde_json::to_string_pretty(&manifest).unwrap());
    println!("audit violations: {}", audit(&records, &samples).len());

    let kitchen = &samples[1].candidate;
    for (item, spec) in build_benchmark_item(kitchen, "What is the color of the {class}?").unwrap()
    {
        println!(
            "bench {}: {} ({} box, {}px)",
            item.id, item.question, spec.color, spec.stroke_px
        );
    }
}
