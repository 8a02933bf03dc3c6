//! Rendered prompts compared against reviewed files in `tests/golden/prompts`.
//! Run with `UPDATE_GOLDENS=1` to rewrite them after an intended change.

mod support;

use std::path::PathBuf;

use scenescout_core::geo::{Cardinal, GeoCoordinate};
use scenescout_core::prompt::*;
use scenescout_core::providers::PlacesProvider;

fn golden(name: &str, text: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden/prompts")
        .join(format!("{name}.txt"));
    if std::env::var_os("UPDATE_GOLDENS").is_some() {
        std::fs::write(&path, text).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}; run with UPDATE_GOLDENS=1", path.display()));
    assert_eq!(text, want, "{name} drifted from its golden");
}

fn context() -> AgentContext {
    let places = support::demo_bundle()
        .nearby_places(GeoCoordinate::new(47.6226744, -122.3387).unwrap(), 100.0)
        .unwrap();
    let mut ctx = AgentContext::new(Cardinal::North);
    ctx.nearby_places = places;
    ctx.prev_description = Some("The sidewalk is about 8 feet wide with street trees.".into());
    ctx
}

#[test]
fn segment() {
    golden("segment", &build_segment_prompt(&context()).unwrap().text);
    let mut first = context();
    first.prev_description = None;
    first.nearby_places.clear();
    golden("segment_first", &build_segment_prompt(&first).unwrap().text);
}

#[test]
fn intersection() {
    let mut ctx = context();
    ctx.prev_description = None;
    golden("intersection", &build_intersection_prompt(&ctx).unwrap().text);
}

#[test]
fn destination() {
    let p = build_destination_prompt(
        "I take the bus to work.",
        "Westlake Ave N & Mercer St",
    )
    .unwrap();
    golden("destination", &p.text);
}

#[test]
fn direction() {
    let p = build_direction_prompt(
        "I want to find a quiet park to read in.",
        "Russell St",
        Cardinal::North,
        Cardinal::North,
        Some("park"),
    )
    .unwrap();
    golden("direction", &p.text);
    let p = build_direction_prompt("I want a park.", "unnamed street", Cardinal::West, Cardinal::South, None)
        .unwrap();
    golden("direction_no_place_type", &p.text);
}

#[test]
fn selector() {
    let roads = [
        RoadCandidate { idx: 1, description: "Heading North on Russell St: a community center.".into() },
        RoadCandidate { idx: 2, description: "Heading West on Norman Ave: a supermarket.".into() },
        RoadCandidate { idx: 3, description: "Heading South on Russell St: back to the park.".into() },
    ];
    let p = build_selector_prompt("I want to find a quiet park to read in.", &roads, Some(3)).unwrap();
    golden("selector", &p.text);
    let p = build_selector_prompt("I want a park.", &roads[..2], None).unwrap();
    golden("selector_no_from", &p.text);
}

#[test]
fn exploration_block() {
    let mut ctx = context();
    ctx.intent = Some("I want to find a quiet park to read in.".into());
    ctx.keywords = KeywordSet::from(vec!["Parks".to_string(), "Benches".to_string()]);
    golden("exploration_block", &build_exploration_block_prompt(&ctx, "park").unwrap().text);
}

#[test]
fn keywords_and_place_type() {
    let intent = "I want to find a quiet park to read in.";
    golden("keywords", &build_keywords_prompt(intent).unwrap().text);
    golden("place_type", &build_place_type_prompt(intent).unwrap().text);
}
