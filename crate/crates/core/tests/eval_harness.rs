mod support;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenescout_core::clock::{Clock, FixedClock};
use scenescout_core::eval::*;
use scenescout_core::exploration::{self, ExplorationConfig, SessionId};
use scenescout_core::geo::{Cardinal, GeoCoordinate};
use scenescout_core::preview::{self, Endpoint, PreviewConfig, PreviewRequest};

fn task(id: &str, mode: Mode, verbosity: Verbosity, n: usize) -> AnnotationTask {
    AnnotationTask {
        task_id: id.to_string(),
        source: TaskSource {
            log_id: "log".into(),
            mode,
            unit: 0,
            verbosity,
        },
        context: TaskContext {
            prev_description: None,
            heading: Cardinal::North,
            places: vec![],
            view_ids: vec![],
        },
        text: "x".into(),
        sentences: (0..n).map(|i| format!("Sentence {i}.")).collect(),
    }
}

fn header() -> EvalHeader {
    EvalHeader::new(FixedClock::epoch().now())
}

const INFO: [InfoType; 3] = [InfoType::Subjective, InfoType::Objective, InfoType::Mixed];
const CORRECT: [Correctness; 4] = [
    Correctness::CannotTell,
    Correctness::Incorrect,
    Correctness::PartiallyCorrect,
    Correctness::Correct,
];
const ERRORS: [ErrorType; 6] = [
    ErrorType::PlausibleDetail,
    ErrorType::PlausibleAdjective,
    ErrorType::FactualError,
    ErrorType::SpatialError,
    ErrorType::Hallucination,
    ErrorType::Other,
];
const CONSIST: [Consistency; 3] = [Consistency::NotLikely, Consistency::Possibly, Consistency::Likely];
const REDUND: [Redundancy; 4] = [
    Redundancy::NoPrev,
    Redundancy::Repeats,
    Redundancy::AddsNew,
    Redundancy::Updates,
];

fn random_annotation(rng: &mut ChaCha8Rng) -> SentenceAnnotation {
    let info_type = INFO[rng.random_range(0..3)];
    let correctness = CORRECT[rng.random_range(0..4)];
    let error_type = match correctness {
        Correctness::Incorrect | Correctness::PartiallyCorrect => ERRORS[rng.random_range(0..6)],
        _ => ErrorType::None,
    };
    let objective_subtypes = if info_type == InfoType::Subjective {
        Default::default()
    } else {
        [ObjectiveSubtype::Poi, ObjectiveSubtype::Accessibility].into()
    };
    SentenceAnnotation {
        info_type,
        objective_subtypes,
        correctness,
        error_type,
        consistency: CONSIST[rng.random_range(0..3)],
        redundancy: REDUND[rng.random_range(0..4)],
        note: None,
    }
}

/// Straight counting over the raw records, sharing nothing with `aggregate`.
fn brute_force(
    rows: &[(Mode, Verbosity, SentenceAnnotation)],
    rel: &[(Mode, Verbosity, Relevance)],
    group: Option<(Mode, Verbosity)>,
) -> BTreeMap<(String, String), (usize, usize)> {
    let keep = |m: Mode, v: Verbosity| group.is_none_or(|g| g == (m, v));
    let sents: Vec<&SentenceAnnotation> =
        rows.iter().filter(|r| keep(r.0, r.1)).map(|r| &r.2).collect();
    let mut out = BTreeMap::new();
    let mut put = |panel: &str, cat: String, count: usize, den: usize| {
        out.insert((panel.to_string(), cat), (count, den));
    };
    let n = sents.len();
    for c in INFO {
        put("information_type", format!("{c:?}"), sents.iter().filter(|a| a.info_type == c).count(), n);
    }
    for c in CORRECT {
        put("correctness", format!("{c:?}"), sents.iter().filter(|a| a.correctness == c).count(), n);
    }
    let with_err = sents.iter().filter(|a| a.error_type != ErrorType::None).count();
    for c in ERRORS {
        put("error_type", format!("{c:?}"), sents.iter().filter(|a| a.error_type == c).count(), with_err);
    }
    for c in CONSIST {
        put("consistency", format!("{c:?}"), sents.iter().filter(|a| a.consistency == c).count(), n);
    }
    for c in REDUND {
        put("redundancy", format!("{c:?}"), sents.iter().filter(|a| a.redundancy == c).count(), n);
    }
    let rated: Vec<Relevance> = rel
        .iter()
        .filter(|r| keep(r.0, r.1) && r.2 != Relevance::NotApplicable)
        .map(|r| r.2)
        .collect();
    for c in [Relevance::Fully, Relevance::Partially, Relevance::Not] {
        put("relevance", format!("{c:?}"), rated.iter().filter(|r| **r == c).count(), rated.len());
    }
    out
}

fn flatten(g: &GroupReport) -> BTreeMap<(String, String), (usize, usize)> {
    g.panels
        .iter()
        .flat_map(|p| {
            p.rows
                .iter()
                .map(move |r| ((p.name.clone(), r.category.clone()), (r.count, p.denominator)))
        })
        .collect()
}

#[test]
fn aggregate_matches_brute_force_tally() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..1000 {
        let ntasks = rng.random_range(1..8);
        let mut tasks = Vec::new();
        for t in 0..ntasks {
            let mode = Mode::ALL[rng.random_range(0..2)];
            let v = Verbosity::ALL[rng.random_range(0..3)];
            tasks.push(task(&format!("t{t}"), mode, v, rng.random_range(1..6)));
        }
        let mut file = AnnotationFile::new(header(), tasks.clone());
        let mut rows = Vec::new();
        let mut rel = Vec::new();
        for t in &tasks {
            let mut last = BTreeMap::new();
            for _ in 0..rng.random_range(0..10) {
                let i = rng.random_range(0..t.sentences.len());
                let a = random_annotation(&mut rng);
                file.record(&t.task_id, i, a.clone()).unwrap();
                last.insert(i, a);
            }
            rows.extend(last.into_values().map(|a| (t.source.mode, t.source.verbosity, a)));
            if rng.random_bool(0.7) {
                let r = if t.source.mode == Mode::RoutePreview {
                    Relevance::NotApplicable
                } else {
                    [Relevance::Fully, Relevance::Partially, Relevance::Not][rng.random_range(0..3)]
                };
                file.record_description(&t.task_id, DescriptionAnnotation { relevance: r }).unwrap();
                rel.push((t.source.mode, t.source.verbosity, r));
            }
        }
        let report = aggregate(&file);
        assert_eq!(flatten(report.overall()), brute_force(&rows, &rel, None), "trial {trial}");
        for g in &report.groups[..report.groups.len() - 1] {
            let key = (g.mode.unwrap(), g.verbosity.unwrap());
            assert_eq!(flatten(g), brute_force(&rows, &rel, Some(key)), "trial {trial} {key:?}");
        }
        for g in &report.groups {
            for p in &g.panels {
                let sum: f64 = p.rows.iter().map(|r| r.percent).sum();
                assert!(p.denominator == 0 || (sum - 100.0).abs() <= 0.1, "{} sums to {sum}", p.name);
                for r in &p.rows {
                    if p.denominator > 0 {
                        assert_eq!(r.percent, r.count as f64 * 100.0 / p.denominator as f64);
                    }
                }
            }
        }
    }
}

fn authored(counts: &[(Correctness, usize)], consistency: &[(Consistency, usize)]) -> AnnotationFile {
    let mut file = AnnotationFile::new(header(), vec![task("t", Mode::RoutePreview, Verbosity::Long, 100)]);
    let correct: Vec<Correctness> = counts.iter().flat_map(|(c, n)| std::iter::repeat_n(*c, *n)).collect();
    let consist: Vec<Consistency> = consistency.iter().flat_map(|(c, n)| std::iter::repeat_n(*c, *n)).collect();
    for i in 0..100 {
        let c = correct[i];
        file.record(
            "t",
            i,
            SentenceAnnotation {
                info_type: InfoType::Subjective,
                objective_subtypes: Default::default(),
                correctness: c,
                error_type: if matches!(c, Correctness::Incorrect | Correctness::PartiallyCorrect) {
                    ErrorType::PlausibleDetail
                } else {
                    ErrorType::None
                },
                consistency: consist[i],
                redundancy: Redundancy::AddsNew,
                note: None,
            },
        )
        .unwrap();
    }
    file
}

#[test]
fn authored_vectors_reproduce_reported_proportions() {
    let file = authored(
        &[
            (Correctness::Correct, 72),
            (Correctness::PartiallyCorrect, 14),
            (Correctness::Incorrect, 8),
            (Correctness::CannotTell, 6),
        ],
        &[(Consistency::Likely, 79), (Consistency::Possibly, 16), (Consistency::NotLikely, 5)],
    );
    let r = aggregate(&file);
    let p = r.overall().panel("correctness").unwrap();
    let got: Vec<f64> = ["Correct", "PartiallyCorrect", "Incorrect", "CannotTell"]
        .iter()
        .map(|c| p.percent(c).unwrap())
        .collect();
    assert_eq!(got, [72.0, 14.0, 8.0, 6.0]);
    let p = r.overall().panel("consistency").unwrap();
    let got: Vec<f64> = ["Likely", "Possibly", "NotLikely"].iter().map(|c| p.percent(c).unwrap()).collect();
    assert_eq!(got, [79.0, 16.0, 5.0]);
    assert_eq!(r.overall().panel("error_type").unwrap().denominator, 22);
}

#[test]
fn single_annotation_is_whole_panel() {
    let file = authored(&[(Correctness::Correct, 100)], &[(Consistency::Possibly, 100)]);
    let mut one = AnnotationFile::new(header(), file.tasks().to_vec());
    one.record("t", 3, file.sentence("t", 3).unwrap().clone()).unwrap();
    let r = aggregate(&one);
    assert_eq!(r.overall().panel("correctness").unwrap().percent("Correct"), Some(100.0));
    assert_eq!(r.overall().panel("consistency").unwrap().percent("Possibly"), Some(100.0));
    assert!(render_markdown(&r).contains("| Correct | 1 | 100.0 |"));
}

#[test]
fn invalid_records_name_the_rule() {
    let mut file = AnnotationFile::new(header(), vec![task("t", Mode::RoutePreview, Verbosity::Short, 2)]);
    let mut a = authored(&[(Correctness::Correct, 100)], &[(Consistency::Likely, 100)])
        .sentence("t", 0)
        .unwrap()
        .clone();
    a.error_type = ErrorType::FactualError;
    let err = file.record("t", 0, a).unwrap_err();
    assert!(matches!(err, EvalError::Validation { rule: "error_type_iff_incorrect", .. }));
    assert!(err.to_string().contains("error_type_iff_incorrect"));
    assert!(matches!(
        file.record_description("t", DescriptionAnnotation { relevance: Relevance::Fully }),
        Err(EvalError::Validation { rule: "relevance_only_for_exploration", .. })
    ));
    assert!(matches!(
        file.record("nope", 0, random_annotation(&mut ChaCha8Rng::seed_from_u64(1))),
        Err(EvalError::UnknownTask(_))
    ));
    assert!(matches!(
        file.record("t", 2, random_annotation(&mut ChaCha8Rng::seed_from_u64(1))),
        Err(EvalError::SentenceOutOfRange { .. })
    ));
}

#[test]
fn file_round_trip_and_latest_wins() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.jsonl");
    let tasks = vec![
        task("a", Mode::RoutePreview, Verbosity::Short, 2),
        task("b", Mode::VirtualExploration, Verbosity::Long, 3),
    ];
    let mut f = AnnotationFile::create(&path, header(), tasks).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let first = random_annotation(&mut rng);
    let mut second = random_annotation(&mut rng);
    while second == first {
        second = random_annotation(&mut rng);
    }
    f.record("b", 1, first.clone()).unwrap();
    f.record("b", 1, second.clone()).unwrap();
    f.record_description("b", DescriptionAnnotation { relevance: Relevance::Partially }).unwrap();

    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().next().unwrap().contains("\"eval.v1\""));
    assert_eq!(text.lines().count(), 1 + 2 + 3);
    let back = AnnotationFile::open(&path).unwrap();
    assert_eq!(back.sentence("b", 1), Some(&second));
    assert_eq!(back.description("b").unwrap().relevance, Relevance::Partially);
    assert_eq!(back.tasks(), f.tasks());
    let compact = AnnotationFile::from_jsonl(&back.to_jsonl()).unwrap();
    assert_eq!(compact.sentence("b", 1), Some(&second));
    assert_eq!(compact.to_jsonl(), back.to_jsonl());
}

#[test]
fn diff_lists_disagreements() {
    let tasks = vec![task("a", Mode::VirtualExploration, Verbosity::Short, 2)];
    let mut left = AnnotationFile::new(header(), tasks.clone());
    let mut right = AnnotationFile::new(header(), tasks);
    let a = authored(&[(Correctness::Correct, 100)], &[(Consistency::Likely, 100)])
        .sentence("t", 0)
        .unwrap()
        .clone();
    let mut b = a.clone();
    b.consistency = Consistency::Possibly;
    left.record("a", 0, a.clone()).unwrap();
    right.record("a", 0, b).unwrap();
    left.record("a", 1, a).unwrap();
    left.record_description("a", DescriptionAnnotation { relevance: Relevance::Fully }).unwrap();
    right.record_description("a", DescriptionAnnotation { relevance: Relevance::Not }).unwrap();
    let d = diff(&left, &right);
    assert!(d.iter().any(|x| x.sentence_idx == Some(0) && x.field == "consistency"
        && x.left.as_deref() == Some("Likely") && x.right.as_deref() == Some("Possibly")));
    assert!(d.iter().any(|x| x.sentence_idx == Some(1) && x.right.is_none()));
    assert!(d.iter().any(|x| x.field == "relevance" && x.left.as_deref() == Some("Fully")));
    assert!(diff(&left, &left).is_empty());
}

fn modes(n_preview: usize, n_explore: usize) -> Vec<Mode> {
    let mut m = vec![Mode::RoutePreview; n_preview];
    m.extend(vec![Mode::VirtualExploration; n_explore]);
    m
}

#[test]
fn sampling_is_reproducible_and_stratified() {
    let m = modes(50, 50);
    let a = sample_indices(&m, 0.2, 7).unwrap();
    assert_eq!(a.len(), 20);
    assert_eq!(a, sample_indices(&m, 0.2, 7).unwrap());
    assert_ne!(a, sample_indices(&m, 0.2, 8).unwrap());
    assert_eq!(a.iter().filter(|&&i| i < 50).count(), 10);
    let m = modes(20, 20);
    let b = sample_indices(&m, 0.2, 7).unwrap();
    assert_eq!((b.iter().filter(|&&i| i < 20).count(), b.len()), (4, 8));
    assert_eq!(sample_indices(&m, 1.0, 3).unwrap().len(), 40);
    assert!(matches!(sample_indices(&m, 1.5, 3), Err(EvalError::Fraction(_))));
    assert!(sample_tasks(&[], 0.2, 7).unwrap().is_empty());
}

#[test]
fn inclusion_frequency_converges_to_fraction() {
    let m = modes(30, 70);
    let trials = 10_000;
    let mut hits = vec![0u32; m.len()];
    for seed in 0..trials {
        for i in sample_indices(&m, 0.2, seed).unwrap() {
            hits[i] += 1;
        }
    }
    for (i, h) in hits.iter().enumerate() {
        let f = *h as f64 / trials as f64;
        assert!((f - 0.2).abs() <= 0.03, "description {i} sampled at {f}");
    }
}

fn preview_log() -> SourceLog {
    let req = PreviewRequest {
        origin: Endpoint::Coord(GeoCoordinate::new(47.622, -122.3387).unwrap()),
        destination: Endpoint::Coord(GeoCoordinate::new(47.624698, -122.3387).unwrap()),
        destination_name: "Westlake Ave N & Mercer St".into(),
        context: String::new(),
    };
    let result = preview::generate_preview(
        &support::demo_providers(),
        &req,
        &PreviewConfig::default(),
        &FixedClock::epoch(),
        &mut |_| {},
    )
    .unwrap();
    let text = serde_json::to_string(&result).unwrap();
    SourceLog::parse("preview-1".into(), &text).unwrap()
}

fn exploration_log() -> SourceLog {
    let p = support::demo_providers();
    let cfg = ExplorationConfig::default();
    let mut s = exploration::start_session(
        &p,
        SessionId("explore-1".into()),
        "I want to find a quiet park to read in.",
        GeoCoordinate::new(40.723, -73.945).unwrap(),
        &cfg,
    )
    .unwrap();
    exploration::add_keywords(&mut s, &["Benches"]).unwrap();
    for _ in 0..3 {
        exploration::describe_block(&p, &mut s, &cfg).unwrap().unwrap();
        exploration::step_forward(&p, &mut s).unwrap();
    }
    let text = exploration::to_log(&s, FixedClock::epoch().now());
    SourceLog::parse("explore-1".into(), &text).unwrap()
}

#[test]
fn tasks_from_usage_logs() {
    let logs = [preview_log(), exploration_log()];
    let all = collect_tasks(&logs);
    let preview: Vec<_> = all.iter().filter(|t| t.source.mode == Mode::RoutePreview).collect();
    let explore: Vec<_> = all.iter().filter(|t| t.source.mode == Mode::VirtualExploration).collect();
    assert_eq!(preview.len(), 27);
    assert_eq!(explore.len(), 9);
    let SourceLog::Preview { result, .. } = &logs[0] else { unreachable!() };
    for t in &preview {
        assert!(!t.sentences.is_empty());
        let seg = &result.segments[t.source.unit];
        let ids: Vec<String> = seg.views.iter().map(|v| v.view_id()).collect();
        assert_eq!(t.context.view_ids, ids);
    }
    let second_medium = preview
        .iter()
        .find(|t| t.source.unit == 1 && t.source.verbosity == Verbosity::Medium)
        .unwrap();
    assert_eq!(
        second_medium.context.prev_description.as_deref(),
        Some(result.segments[0].triple.as_ref().unwrap().medium.as_str())
    );
    assert!(explore[0].context.places.iter().any(|p| p.contains("McGolrick Park")));

    let s1 = sample_tasks(&logs, 0.2, 7).unwrap();
    let s2 = sample_tasks(&logs, 0.2, 7).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(s1.iter().filter(|t| t.source.mode == Mode::RoutePreview).count(), 5);
    assert_eq!(s1.iter().filter(|t| t.source.mode == Mode::VirtualExploration).count(), 2);
}

proptest! {
    #[test]
    fn stratified_counts_are_rounded_fractions(np in 0usize..60, ne in 0usize..60, f in 0.01f64..=1.0, seed: u64) {
        let m = modes(np, ne);
        let s = sample_indices(&m, f, seed).unwrap();
        let want = |n: usize| ((n as f64) * f).round() as usize;
        prop_assert_eq!(s.iter().filter(|&&i| i < np).count(), want(np));
        prop_assert_eq!(s.iter().filter(|&&i| i >= np).count(), want(ne));
        prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn failed_segments_are_skipped_but_units_stay_traceable() {
    let mut bundle = support::demo_bundle();
    bundle.script("segment:wl-04", "no json here");
    let providers = scenescout_core::providers::Providers::from_bundle(std::sync::Arc::new(bundle));
    let req = PreviewRequest {
        origin: Endpoint::Coord(GeoCoordinate::new(47.622, -122.3387).unwrap()),
        destination: Endpoint::Coord(GeoCoordinate::new(47.624698, -122.3387).unwrap()),
        destination_name: "Westlake Ave N & Mercer St".into(),
        context: String::new(),
    };
    let result = preview::generate_preview(&providers, &req, &PreviewConfig::default(), &FixedClock::epoch(), &mut |_| {})
        .unwrap();
    let log = SourceLog::Preview { id: "p".into(), result: result.clone() };
    let tasks = collect_tasks(&[log]);
    assert_eq!(tasks.len(), 24);
    assert!(tasks.iter().all(|t| t.source.unit != 4));
    let five = tasks
        .iter()
        .find(|t| t.source.unit == 5 && t.source.verbosity == Verbosity::Long)
        .unwrap();
    assert_eq!(five.task_id, "p#5:long");
    assert_eq!(
        five.context.prev_description.as_deref(),
        Some(result.segments[3].triple.as_ref().unwrap().long.as_str())
    );
}
