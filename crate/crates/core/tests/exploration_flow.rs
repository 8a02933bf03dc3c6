mod support;

use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use scenescout_core::clock::{Clock, FixedClock};
use scenescout_core::exploration::*;
use scenescout_core::geo::{Cardinal, GeoCoordinate};
use scenescout_core::providers::{CachedPanoramas, PanoId, Providers};

const INTENT: &str = "I want to find a quiet park to read in.";

fn gp0() -> GeoCoordinate {
    GeoCoordinate::new(40.723, -73.945).unwrap()
}

fn providers() -> &'static Providers {
    static P: OnceLock<Providers> = OnceLock::new();
    P.get_or_init(|| {
        let bundle = Arc::new(support::demo_bundle());
        let mut p = Providers::from_bundle(bundle.clone());
        p.panoramas = Arc::new(CachedPanoramas::new(bundle, 64 << 20));
        p
    })
}

fn start(budget: u32) -> ExplorationSession {
    let cfg = ExplorationConfig {
        step_budget: budget,
        ..Default::default()
    };
    start_session(providers(), SessionId("s1".into()), INTENT, gp0(), &cfg).unwrap()
}

fn walk_to_intersection(s: &mut ExplorationSession) {
    let cfg = ExplorationConfig::default();
    while s.status == SessionStatus::Walking {
        describe_block(providers(), s, &cfg).unwrap().unwrap();
        step_forward(providers(), s).unwrap();
    }
}

#[test]
fn park_search_scenario() {
    let p = providers();
    let cfg = ExplorationConfig::default();
    let mut s = start(DEFAULT_STEP_BUDGET);
    assert_eq!(s.status, SessionStatus::AwaitingKeywords);
    assert_eq!(s.position, PanoId::new("gp-russell-nassau"));
    assert_eq!(
        s.keywords.as_slice(),
        ["Parks", "Grocery stores", "Community centers", "Residential area"]
    );
    assert_eq!(s.place_type, "park");

    let added = add_keywords(&mut s, &["Benches", "parks"]).unwrap();
    assert_eq!(added, ["Benches"]);
    assert_eq!(s.status, SessionStatus::Walking);

    let first = describe_block(p, &mut s, &cfg).unwrap().unwrap();
    assert!(first.long.contains("McGolrick Park"));
    step_forward(p, &mut s).unwrap();
    assert_eq!(s.position, PanoId::new("gp-russell-01"));
    let second = describe_block(p, &mut s, &cfg).unwrap().unwrap();
    let SessionEvent::BlockDescribed { prompt, .. } = s.history.last().unwrap() else {
        panic!("expected a described block");
    };
    assert!(prompt.contains(&first.long));
    assert!(prompt.contains("Secondary Labels: Parks, Grocery stores, Community centers, Residential area, Benches"));
    assert_ne!(first, second);

    walk_to_intersection(&mut s);
    assert_eq!(s.status, SessionStatus::AtIntersection);
    assert_eq!(s.position, PanoId::new("gp-russell-norman"));

    let options = enumerate_directions(p, &mut s).unwrap();
    let summary: Vec<(usize, &str, Cardinal, bool)> = options
        .iter()
        .map(|o| (o.idx, o.street_name.as_str(), o.cardinal, o.previously_traveled))
        .collect();
    assert_eq!(
        summary,
        [
            (1, "Russell St", Cardinal::North, false),
            (2, "Norman Ave", Cardinal::West, false),
            (3, "Norman Ave", Cardinal::East, false),
            (4, "Russell St", Cardinal::South, true),
        ]
    );
    assert!(options[0].description.body.starts_with("Heading North on Russell Street:"));
    assert!(options.iter().all(|o| o.error.is_none()));
    assert_eq!(enumerate_directions(p, &mut s).unwrap(), options);

    assert_eq!(suggest_direction(p, &mut s).unwrap(), Some(1));
    assert_eq!(s.suggestion(), Some(1));

    assert!(matches!(
        choose_direction(p, &mut s, 5),
        Err(ExplorationError::InvalidArgument(_))
    ));
    choose_direction(p, &mut s, 1).unwrap();
    assert_eq!(s.status, SessionStatus::Walking);
    assert_eq!(s.position, PanoId::new("gp-russell-07"));
    assert!(matches!(
        s.history.iter().rev().nth(1),
        Some(SessionEvent::Decided { chosen: 1, suggested: Some(1), options_offered: 4, .. })
    ));

    walk_to_intersection(&mut s);
    assert_eq!(s.position, PanoId::new("gp-russell-driggs"));
    let options = enumerate_directions(p, &mut s).unwrap();
    assert_eq!(options.len(), 3);
    let west = options.iter().find(|o| o.cardinal == Cardinal::West).unwrap();
    assert_eq!(west.description.body, PLACEHOLDER_BODY);
    assert!(west.error.is_some());
    assert!(options[2].previously_traveled);
    // the selector answers out of range twice
    assert_eq!(suggest_direction(p, &mut s).unwrap(), None);
    assert!(matches!(
        s.history.last(),
        Some(SessionEvent::SuggestionMade { idx: None, error: Some(_), .. })
    ));

    end_session(&mut s).unwrap();
    assert_eq!(s.status, SessionStatus::Ended);
    assert!(matches!(
        step_forward(p, &mut s),
        Err(ExplorationError::InvalidState { .. })
    ));
    assert_eq!(replay(&s.history).unwrap(), s);
}

#[test]
fn cul_de_sac_turns_back() {
    let p = providers();
    let mut s = start(DEFAULT_STEP_BUDGET);
    add_keywords::<&str>(&mut s, &[]).unwrap();
    walk_to_intersection(&mut s);
    choose_direction(p, &mut s, 3).unwrap();
    assert_eq!(s.position, PanoId::new("gp-norman-e1"));
    walk_to_intersection(&mut s);
    assert_eq!(s.position, PanoId::new("gp-norman-e3"));
    assert!(matches!(s.history.last(), Some(SessionEvent::DeadEnd { .. })));
    let options = enumerate_directions(p, &mut s).unwrap();
    assert_eq!(options.len(), 1);
    assert!(options[0].previously_traveled);
    assert!(options[0].description.body.starts_with("Heading West on Norman Avenue"));
    assert_eq!(suggest_direction(p, &mut s).unwrap(), None);
    choose_direction(p, &mut s, 1).unwrap();
    assert_eq!(s.position, PanoId::new("gp-norman-e2"));
    assert_eq!(s.heading.cardinal(), Cardinal::West);
}

#[test]
fn step_budget_ends_session() {
    let p = providers();
    let mut s = start(3);
    add_keywords(&mut s, &["Trees"]).unwrap();
    for _ in 0..3 {
        step_forward(p, &mut s).unwrap();
    }
    assert_eq!(s.status, SessionStatus::Ended);
    assert_eq!(s.steps_taken, 3);
    assert!(matches!(
        s.history.last(),
        Some(SessionEvent::Ended { reason: EndReason::StepBudget })
    ));
}

#[test]
fn log_round_trip_and_truncated_tail() {
    let p = providers();
    let mut s = start(DEFAULT_STEP_BUDGET);
    add_keywords(&mut s, &["Benches"]).unwrap();
    walk_to_intersection(&mut s);
    suggest_direction(p, &mut s).unwrap();
    let log = to_log(&s, FixedClock::epoch().now());
    let (header, back) = from_log(&log).unwrap();
    assert_eq!(header.schema, SCHEMA);
    assert_eq!(back, s);
    assert_eq!(to_log(&back, header.created_at), log);

    let cut = &log[..log.len() - 20];
    let (_, partial) = from_log(cut).unwrap();
    assert_eq!(partial.history.len(), s.history.len() - 1);
}

#[test]
fn no_coverage_start_is_typed() {
    let err = start_session(
        providers(),
        SessionId("x".into()),
        INTENT,
        GeoCoordinate::new(10.0, 10.0).unwrap(),
        &ExplorationConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, ExplorationError::NoCoverage(_)));
}

#[derive(Debug, Clone)]
enum Op {
    Keywords(Vec<String>),
    Describe,
    Step,
    Enumerate,
    Suggest,
    Choose(usize),
    End,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        1 => prop::collection::vec("[A-Za-z ]{0,8}", 0..3).prop_map(Op::Keywords),
        2 => Just(Op::Describe),
        6 => Just(Op::Step),
        2 => Just(Op::Enumerate),
        2 => Just(Op::Suggest),
        4 => (0usize..6).prop_map(Op::Choose),
        1 => Just(Op::End),
    ]
}

use SessionStatus::*;

/// Statuses in which each operation is allowed, and those it may lead to.
fn rule(op: &Op) -> (&'static [SessionStatus], &'static [SessionStatus]) {
    match op {
        Op::Keywords(_) => (&[AwaitingKeywords, Walking], &[Walking]),
        Op::Describe => (&[Walking], &[Walking]),
        Op::Step => (&[Walking], &[Walking, AtIntersection, Ended]),
        Op::Enumerate | Op::Suggest => (&[AtIntersection], &[AtIntersection]),
        Op::Choose(_) => (&[AtIntersection], &[Walking, Ended]),
        Op::End => (&[AwaitingKeywords, Walking, AtIntersection], &[Ended]),
    }
}

fn apply(s: &mut ExplorationSession, op: &Op) -> Result<(), ExplorationError> {
    let p = providers();
    match op {
        Op::Keywords(k) => add_keywords(s, k).map(drop),
        Op::Describe => describe_block(p, s, &ExplorationConfig::default()).map(drop),
        Op::Step => step_forward(p, s),
        Op::Enumerate => enumerate_directions(p, s).map(drop),
        Op::Suggest => suggest_direction(p, s).map(drop),
        Op::Choose(i) => choose_direction(p, s, *i),
        Op::End => end_session(s),
    }
}

fn cases() -> u32 {
    std::env::var("EXPLORATION_CASES")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(10_000)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: cases(), failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn operations_respect_status_machine(ops in prop::collection::vec(op(), 1..40), budget in 4u32..40) {
        let mut s = start(budget);
        for op in &ops {
            let before = s.clone();
            let (allowed, after) = rule(op);
            match apply(&mut s, op) {
                Ok(()) => {
                    prop_assert!(allowed.contains(&before.status), "{op:?} ran in {}", before.status);
                    prop_assert!(after.contains(&s.status), "{op:?}: {} -> {}", before.status, s.status);
                    prop_assert!(s.steps_taken <= s.step_budget);
                }
                Err(ExplorationError::InvalidState { status, .. }) => {
                    prop_assert!(!allowed.contains(&before.status));
                    prop_assert_eq!(status, before.status);
                    prop_assert_eq!(&s, &before);
                }
                Err(ExplorationError::InvalidArgument(_)) => {
                    prop_assert!(matches!(op, Op::Choose(_)));
                    prop_assert_eq!(&s, &before);
                }
                Err(e) => prop_assert!(false, "{op:?}: {e}"),
            }
        }
        prop_assert_eq!(replay(&s.history).unwrap(), s.clone());
        let (_, from_disk) = from_log(&to_log(&s, FixedClock::epoch().now())).unwrap();
        prop_assert_eq!(from_disk, s);
    }
}
