use serde::Deserialize;

use super::{join_url, HttpClient};
use crate::geo::{self, GeoCoordinate, Polyline};
use crate::providers::*;

/// Decodes an encoded polyline (Google polyline algorithm) at `precision`
/// decimal digits; OSRM uses 5.
pub fn decode_polyline(encoded: &str, precision: u32) -> ProviderResult<Vec<GeoCoordinate>> {
    let factor = 10f64.powi(precision as i32);
    let bytes = encoded.as_bytes();
    let mut idx = 0;
    let (mut lat, mut lon) = (0i64, 0i64);
    let mut out = Vec::new();

    let next = |idx: &mut usize| -> ProviderResult<i64> {
        let mut result = 0i64;
        let mut shift = 0;
        loop {
            let b = *bytes
                .get(*idx)
                .ok_or_else(|| ProviderError::Decode("truncated polyline".to_string()))?
                as i64;
            *idx += 1;
            if !(63..=126).contains(&b) || shift > 60 {
                return Err(ProviderError::Decode(format!(
                    "invalid polyline byte {b} at {}",
                    *idx - 1
                )));
            }
            let chunk = b - 63;
            result |= (chunk & 0x1f) << shift;
            shift += 5;
            if chunk < 0x20 {
                break;
            }
        }
        Ok(if result & 1 != 0 {
            !(result >> 1)
        } else {
            result >> 1
        })
    };

    while idx < bytes.len() {
        lat += next(&mut idx)?;
        lon += next(&mut idx)?;
        out.push(GeoCoordinate::new(lat as f64 / factor, lon as f64 / factor)?);
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct OsrmResponse {
    code: String,
    #[serde(default)]
    message: Option<String>,
    #[serde(default)]
    routes: Vec<OsrmRoute>,
}

#[derive(Debug, Deserialize)]
struct OsrmRoute {
    distance: f64,
    geometry: String,
    legs: Vec<OsrmLeg>,
}

#[derive(Debug, Deserialize)]
struct OsrmLeg {
    steps: Vec<OsrmStep>,
}

#[derive(Debug, Deserialize)]
struct OsrmStep {
    #[serde(default)]
    name: String,
    maneuver: OsrmManeuver,
    #[serde(default)]
    intersections: Vec<OsrmIntersection>,
}

#[derive(Debug, Deserialize)]
struct OsrmManeuver {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    modifier: Option<String>,
    location: [f64; 2],
}

#[derive(Debug, Deserialize)]
struct OsrmIntersection {
    location: [f64; 2],
    #[serde(default)]
    bearings: Vec<f64>,
}

fn maneuver_kind(kind: &str, modifier: Option<&str>) -> ManeuverKind {
    match kind {
        "depart" => ManeuverKind::Depart,
        "arrive" => ManeuverKind::Arrive,
        _ => match modifier.unwrap_or("") {
            m if m.contains("left") => ManeuverKind::TurnLeft,
            m if m.contains("right") => ManeuverKind::TurnRight,
            _ => ManeuverKind::Continue,
        },
    }
}

fn lon_lat(p: [f64; 2]) -> ProviderResult<GeoCoordinate> {
    Ok(GeoCoordinate::new(p[1], p[0])?)
}

/// Converts an OSRM `route` response body into a [`RouteResult`]. Intermediate
/// intersections inside a step with three or more approaches become
/// `CrossIntersection` steps.
pub fn parse_osrm(body: &str) -> ProviderResult<RouteResult> {
    let resp: OsrmResponse =
        serde_json::from_str(body).map_err(|e| ProviderError::Decode(e.to_string()))?;
    if resp.code != "Ok" {
        return Err(ProviderError::RouteUnavailable(format!(
            "{}: {}",
            resp.code,
            resp.message.unwrap_or_default()
        )));
    }
    let route = resp
        .routes
        .into_iter()
        .next()
        .ok_or_else(|| ProviderError::RouteUnavailable("no routes returned".to_string()))?;
    let mut points = decode_polyline(&route.geometry, 5)?;
    points.dedup_by(|a, b| geo::distance(*a, *b) < 1e-3);
    let polyline = Polyline::new(points)
        .map_err(|e| ProviderError::RouteUnavailable(format!("degenerate geometry: {e}")))?;

    let mut steps = Vec::new();
    for step in route.legs.iter().flat_map(|l| &l.steps) {
        let kind = maneuver_kind(&step.maneuver.kind, step.maneuver.modifier.as_deref());
        // consecutive legs repeat arrive/depart at waypoints
        if !steps.is_empty() && kind == ManeuverKind::Depart {
            continue;
        }
        steps.push(RouteStep {
            maneuver_kind: kind,
            location: lon_lat(step.maneuver.location)?,
            street_name: step.name.clone(),
        });
        for ix in step.intersections.iter().skip(1) {
            if ix.bearings.len() >= 3 {
                steps.push(RouteStep {
                    maneuver_kind: ManeuverKind::CrossIntersection,
                    location: lon_lat(ix.location)?,
                    street_name: step.name.clone(),
                });
            }
        }
    }
    // only the final arrive survives
    let last_arrive = steps
        .iter()
        .rposition(|s| s.maneuver_kind == ManeuverKind::Arrive);
    steps = steps
        .into_iter()
        .enumerate()
        .filter(|(i, s)| s.maneuver_kind != ManeuverKind::Arrive || Some(*i) == last_arrive)
        .map(|(_, s)| s)
        .collect();
    let result = RouteResult {
        total_length_m: if route.distance > 0.0 {
            route.distance
        } else {
            polyline.total_length()
        },
        polyline,
        steps,
    };
    result.validate()?;
    Ok(result)
}

/// Walking routes from an OSRM server with a `foot` profile.
pub struct OsrmRoutes {
    http: HttpClient,
    base_url: String,
}

impl OsrmRoutes {
    pub fn new(http: HttpClient, base_url: impl Into<String>) -> Self {
        Self {
            http,
            base_url: base_url.into(),
        }
    }

    pub fn route_url(&self, origin: GeoCoordinate, destination: GeoCoordinate) -> String {
        join_url(
            &self.base_url,
            &format!(
                "route/v1/foot/{:.6},{:.6};{:.6},{:.6}?overview=full&geometries=polyline&steps=true",
                origin.lon(),
                origin.lat(),
                destination.lon(),
                destination.lat()
            ),
        )
    }
}

impl RouteProvider for OsrmRoutes {
    fn get_route(
        &self,
        origin: GeoCoordinate,
        destination: GeoCoordinate,
    ) -> ProviderResult<RouteResult> {
        let url = self.route_url(origin, destination);
        let resp = match self.http.send(true, |c| c.get(&url)) {
            Ok(r) => r,
            // OSRM answers NoRoute with HTTP 400 and a JSON body
            Err(ProviderError::Http {
                status: Some(400),
                message,
                ..
            }) => return Err(ProviderError::RouteUnavailable(message)),
            Err(e) => return Err(e),
        };
        let body = resp
            .text()
            .map_err(|e| ProviderError::Decode(e.to_string()))?;
        parse_osrm(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::live::test_server::{serve, Canned};
    use crate::providers::retry::RetryPolicy;
    use std::time::Duration;

    #[test]
    fn decodes_reference_polyline() {
        // reference example from the encoding's documentation
        let pts = decode_polyline("_p~iF~ps|U_ulLnnqC_mqNvxq`@", 5).unwrap();
        let expected = [(38.5, -120.2), (40.7, -120.95), (43.252, -126.453)];
        assert_eq!(pts.len(), 3);
        for (p, (lat, lon)) in pts.iter().zip(expected) {
            assert!((p.lat() - lat).abs() < 1e-9 && (p.lon() - lon).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_garbage_polyline() {
        assert!(decode_polyline("_p~iF~ps|U_ulL", 5).is_err());
        assert!(decode_polyline("\u{1}", 5).is_err());
    }

    const OSRM_BODY: &str = r#"{
      "code": "Ok",
      "routes": [{
        "distance": 1008.6,
        "geometry": "_p~iF~ps|U_ulLnnqC",
        "legs": [{"steps": [
          {"name": "Main St", "maneuver": {"type": "depart", "location": [-120.2, 38.5]},
           "intersections": [{"location": [-120.2, 38.5], "bearings": [10]},
                             {"location": [-120.5, 39.5], "bearings": [0, 90, 180, 270]}]},
          {"name": "Oak Ave", "maneuver": {"type": "turn", "modifier": "slight left", "location": [-120.9, 40.6]}},
          {"name": "", "maneuver": {"type": "arrive", "location": [-120.95, 40.7]}}
        ]}]
      }]
    }"#;

    #[test]
    fn parses_osrm_steps() {
        let r = parse_osrm(OSRM_BODY).unwrap();
        let kinds: Vec<_> = r.steps.iter().map(|s| s.maneuver_kind).collect();
        assert_eq!(
            kinds,
            [
                ManeuverKind::Depart,
                ManeuverKind::CrossIntersection,
                ManeuverKind::TurnLeft,
                ManeuverKind::Arrive
            ]
        );
        assert_eq!(r.steps[2].street_name, "Oak Ave");
        assert_eq!(r.total_length_m, 1008.6);
        assert_eq!(r.polyline.points().len(), 2);
    }

    #[test]
    fn no_route_is_unavailable() {
        let err = parse_osrm(r#"{"code":"NoRoute","message":"Impossible route"}"#).unwrap_err();
        assert!(matches!(err, ProviderError::RouteUnavailable(_)));
    }

    #[test]
    fn fetches_over_http() {
        let (base, rx) = serve(vec![Canned::json(OSRM_BODY)]);
        let http = HttpClient::new(Duration::from_secs(5), RetryPolicy::none()).unwrap();
        let routes = OsrmRoutes::new(http, base);
        let o = GeoCoordinate::new(38.5, -120.2).unwrap();
        let d = GeoCoordinate::new(40.7, -120.95).unwrap();
        let r = routes.get_route(o, d).unwrap();
        assert_eq!(r.steps.len(), 4);
        let req = rx.recv().unwrap();
        assert!(req.starts_with("GET /route/v1/foot/-120.200000,38.500000;-120.950000,40.700000?"));
    }
}
