//! Ground requested classes with an in-process fixture detector.
//!
//! `cargo run --example ground_objects`

use std::sync::Arc;

use groundloop::agents::{
    ground_objects, AgentEndpoint, AgentKind, FixtureAgent, FixtureRecord, RawDetection, Transport,
};
use groundloop::model::ImageRef;

fn det(class: &str, bbox: [f64; 4], score: f64) -> RawDetection {
    RawDetection {
        class: class.into(),
        bbox,
        score,
    }
}

fn main() {
    let image = ImageRef::new("desk", 2000, 1500, "desk.jpg").unwrap();
    let detections = vec![
        det("button", [220.0, 300.0, 340.0, 420.0], 0.91),
        det("button", [600.0, 310.0, 700.0, 410.0], 0.74),
        det("button", [900.0, 290.0, 1010.0, 400.0], 0.22),
        det("paper clip", [1300.0, 1050.0, 1320.0, 1065.0], 0.55),
    ];
    let agent =
        FixtureAgent::from_records(vec![FixtureRecord::grounding("desk", detections)]).unwrap();
    let endpoint = AgentEndpoint::new(
        AgentKind::Grounding,
        Transport::InProcess("example".into()),
        Arc::new(agent),
    );

    let classes = vec!["button".to_string(), "paper clip".into(), "stapler".into()];
    let (result, warnings) = ground_objects(&image, &classes, &endpoint).unwrap();
    for g in &result.groups {
        println!("{} x{}", g.class_name, g.count);
        for c in &g.crops {
            println!(
                "  crop {} score {:.2} at {:?}",
                c.crop.id,
                c.score,
                c.location.coords()
            );
        }
    }
    println!("undetected: {:?}", result.undetected_classes);
    println!("warnings: {}", warnings.len());
}
