mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenescout_core::geo::{GeoCoordinate, HeadingDeg};
use scenescout_core::providers::*;
use serde_json::json;
use support::oracle;

fn c(lat: f64, lon: f64) -> GeoCoordinate {
    GeoCoordinate::new(lat, lon).unwrap()
}

#[test]
fn nearest_panorama_matches_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (lat0, lon0) = (40.72, -73.95);
    let panos: Vec<(String, f64, f64)> = (0..400)
        .map(|i| {
            (
                format!("p{i:03}"),
                lat0 + rng.random_range(0.0..0.01),
                lon0 + rng.random_range(0.0..0.013),
            )
        })
        .collect();
    let meta: Vec<_> = panos
        .iter()
        .map(|(id, lat, lon)| json!({"id": id, "coord": {"lat": lat, "lon": lon}, "links": []}))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let root = support::write_bundle(
        dir.path(),
        json!(meta),
        json!([]),
        json!([]),
        json!({"responses": []}),
    );
    let bundle = FixtureBundle::load(root).unwrap();
    let radius = bundle.snap_radius_m();

    let (mut hits, mut misses) = (0, 0);
    for _ in 0..1000 {
        let q = (
            lat0 + rng.random_range(-0.001..0.011),
            lon0 + rng.random_range(-0.0013..0.0143),
        );
        let best = panos
            .iter()
            .map(|(id, lat, lon)| (oracle::chord_arc_m(q, (*lat, *lon)), id))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        if (best.0 - radius).abs() < 1e-6 {
            continue;
        }
        match bundle.nearest_panorama(c(q.0, q.1)) {
            Ok(p) => {
                assert!(best.0 < radius, "snapped beyond radius at {q:?}");
                assert_eq!(p.id.as_str(), best.1);
                hits += 1;
            }
            Err(ProviderError::NoCoverage { .. }) => {
                assert!(best.0 > radius, "missed {} at {:.2} m", best.1, best.0);
                misses += 1;
            }
            Err(e) => panic!("{e}"),
        }
    }
    assert!(hits > 50 && misses > 50, "hits {hits} misses {misses}");
}

#[test]
fn calls_are_pure_functions_of_bundle_and_request() {
    let a = support::demo_bundle();
    let b = support::demo_bundle();
    let view = ViewRequest::new(PanoId::new("wl-03"), HeadingDeg::new(300.0).unwrap(), 60.0);
    assert_eq!(a.render_view(&view).unwrap(), b.render_view(&view).unwrap());
    let origin = c(47.622, -122.3387);
    let dest = c(47.624698, -122.3387);
    assert_eq!(a.get_route(origin, dest).unwrap(), b.get_route(origin, dest).unwrap());
    assert_eq!(
        a.nearby_places(origin, 100.0).unwrap(),
        a.nearby_places(origin, 100.0).unwrap()
    );
    let req = MllmRequest::new("keywords", "anything");
    assert_eq!(a.complete(&req).unwrap(), b.complete(&req).unwrap());
}

#[test]
fn unscripted_request_reports_pano_key() {
    let bundle = support::demo_bundle();
    let img = bundle
        .render_view(&ViewRequest::new(PanoId::new("wl-03"), HeadingDeg::NORTH, 60.0))
        .unwrap();
    let req = MllmRequest::new("intersection", "x").with_images(vec![img]);
    match bundle.complete(&req) {
        Err(ProviderError::ScriptedMiss { key }) => assert_eq!(key, "intersection:wl-03"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unreachable_route_is_typed() {
    let bundle = support::demo_bundle();
    let err = bundle
        .get_route(c(47.622, -122.3387), c(47.579, -122.345))
        .unwrap_err();
    assert_eq!(
        err,
        ProviderError::RouteUnavailable("destination is not reachable on foot".into())
    );
    assert!(!err.is_retryable());
}

#[test]
fn places_sorted_and_within_radius() {
    let bundle = support::demo_bundle();
    let here = c(47.6226744, -122.3387);
    let places = bundle.nearby_places(here, 100.0).unwrap();
    assert!(!places.is_empty());
    for w in places.windows(2) {
        assert!(w[0].distance_m <= w[1].distance_m);
    }
    for p in &places {
        let d = oracle::chord_arc_m((here.lat(), here.lon()), (p.coord.lat(), p.coord.lon()));
        assert!(d <= 100.0 + 1e-6);
        assert!((d - p.distance_m).abs() < 1e-3);
    }
    assert!(matches!(
        bundle.nearby_places(here, 0.0),
        Err(ProviderError::InvalidArgument(_))
    ));
}

#[test]
fn bundle_with_dangling_link_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let root = support::write_bundle(
        dir.path(),
        json!([{"id": "a", "coord": {"lat": 1.0, "lon": 1.0},
                "links": [{"target": "ghost", "heading": 0.0}]}]),
        json!([]),
        json!([]),
        json!({"responses": []}),
    );
    assert!(matches!(FixtureBundle::load(root), Err(ProviderError::Bundle(_))));
}
