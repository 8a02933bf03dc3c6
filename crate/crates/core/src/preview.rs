//! Route preview: sample a walking route, describe each stop from street-level
//! imagery with chained prompts, then describe the destination.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::geo::{
    self, GeoCoordinate, HeadingDeg, PointKind, SamplePoint, SamplingConfig,
};
use crate::prompt::{
    self, ask, build_destination_prompt, build_intersection_prompt, build_segment_prompt,
    parse_destination, parse_triple, AgentContext, DescriptionTriple, DestinationDetail,
};
use crate::providers::{
    ImageRef, PanoId, PanoramaMeta, Place, ProviderError, Providers, RouteResult, ViewRequest,
};

pub const SCHEMA: &str = "preview.v1";

/// A route endpoint: coordinates, or free text the places provider resolves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Endpoint {
    Coord(GeoCoordinate),
    Query(String),
}

impl FromStr for Endpoint {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.parse::<GeoCoordinate>() {
            Ok(c) => Endpoint::Coord(c),
            Err(_) => Endpoint::Query(s.trim().to_string()),
        })
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Coord(c) => write!(f, "{c}"),
            Endpoint::Query(q) => f.write_str(q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewRequest {
    pub origin: Endpoint,
    pub destination: Endpoint,
    pub destination_name: String,
    /// Question the traveller has about the destination; may be empty.
    #[serde(default)]
    pub context: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreviewConfig {
    pub sampling: SamplingConfig,
    pub places_radius_m: f64,
    /// A sample this close to a turn or crossing is an intersection.
    pub intersection_radius_m: f64,
    /// Panoramas before the destination whose views describe it.
    pub approach_panos: usize,
}

impl Default for PreviewConfig {
    fn default() -> Self {
        Self {
            sampling: SamplingConfig::default(),
            places_radius_m: 100.0,
            intersection_radius_m: 15.0,
            approach_panos: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentStatus {
    Described,
    Failed,
    ImageryUnavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewSegment {
    pub index: usize,
    pub sample: SamplePoint,
    pub status: SegmentStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pano: Option<PanoId>,
    pub views: Vec<ViewRequest>,
    pub places: Vec<Place>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triple: Option<DescriptionTriple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DestinationOutcome {
    pub name: String,
    pub approach: Vec<PanoId>,
    pub views: Vec<ViewRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<DestinationDetail>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewResult {
    pub schema: String,
    pub request: PreviewRequest,
    pub route: RouteResult,
    pub segments: Vec<PreviewSegment>,
    pub destination: DestinationOutcome,
    pub generated_at: DateTime<Utc>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreviewError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("could not resolve {endpoint:?}: {source}")]
    Resolve {
        endpoint: String,
        source: ProviderError,
    },
    #[error(transparent)]
    Route(ProviderError),
}

#[derive(Debug, Error)]
pub enum DestinationError {
    #[error("no approach panoramas")]
    NoApproach,
    #[error(transparent)]
    Prompt(#[from] prompt::PromptError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Ask(#[from] prompt::AskError),
}

/// Intersection when within `radius_m` of a turn or crossing maneuver, or when
/// the local panorama joins three or more links. The last sample is always
/// the destination.
pub fn classify_point(
    route: &RouteResult,
    sample: &SamplePoint,
    pano_degree: Option<usize>,
    is_last: bool,
    radius_m: f64,
) -> PointKind {
    if is_last {
        return PointKind::Destination;
    }
    let near_maneuver = route
        .steps
        .iter()
        .filter(|s| s.maneuver_kind.is_intersection())
        .any(|s| geo::distance(s.location, sample.coord) <= radius_m);
    if near_maneuver || pano_degree.is_some_and(|d| d >= 3) {
        PointKind::Intersection
    } else {
        PointKind::MidBlock
    }
}

/// Views for a sample: four 90° views all around at intersections, otherwise
/// three 60° views covering the forward half (left, front, right).
pub fn views_for(pano: &PanoId, heading: HeadingDeg, kind: PointKind) -> Vec<ViewRequest> {
    let (offsets, fov): (&[f64], f64) = match kind {
        PointKind::Intersection => (&[0.0, 90.0, 180.0, 270.0], 90.0),
        PointKind::MidBlock | PointKind::Destination => (&[-60.0, 0.0, 60.0], 60.0),
    };
    offsets
        .iter()
        .map(|o| ViewRequest::new(pano.clone(), heading.rotate(*o), fov))
        .collect()
}

/// Describes the destination from views along the final approach, attached in
/// approach order with the view facing the destination last.
pub fn describe_destination(
    providers: &Providers,
    approach: &[(PanoramaMeta, HeadingDeg)],
    context: &str,
    place_name: &str,
) -> Result<(prompt::Prompt, Vec<ViewRequest>, DestinationDetail), DestinationError> {
    if approach.is_empty() {
        return Err(DestinationError::NoApproach);
    }
    let prompt = build_destination_prompt(context, place_name)?;
    let views: Vec<ViewRequest> = approach
        .iter()
        .map(|(p, h)| ViewRequest::new(p.id.clone(), *h, 90.0))
        .collect();
    let images = views
        .iter()
        .map(|v| providers.panoramas.render_view(v))
        .collect::<Result<Vec<_>, _>>()?;
    let detail = ask(providers.model.as_ref(), &prompt, &images, parse_destination)?.value;
    Ok((prompt, views, detail))
}

struct Prefetched {
    sample: SamplePoint,
    pano: Option<PanoramaMeta>,
    views: Vec<ViewRequest>,
    images: Result<Vec<ImageRef>, ProviderError>,
    places: Result<Vec<Place>, ProviderError>,
}

fn resolve(providers: &Providers, e: &Endpoint) -> Result<GeoCoordinate, PreviewError> {
    match e {
        Endpoint::Coord(c) => Ok(*c),
        Endpoint::Query(q) => providers
            .places
            .resolve(q)
            .map_err(|source| PreviewError::Resolve {
                endpoint: q.clone(),
                source,
            }),
    }
}

fn prefetch(
    providers: &Providers,
    route: &RouteResult,
    samples: Vec<SamplePoint>,
    cfg: &PreviewConfig,
) -> Vec<Prefetched> {
    let last = samples.len().saturating_sub(1);
    samples
        .into_par_iter()
        .enumerate()
        .map(|(i, mut sample)| {
            let pano = providers.panoramas.nearest_panorama(sample.coord);
            sample.kind = classify_point(
                route,
                &sample,
                pano.as_ref().ok().map(PanoramaMeta::degree),
                i == last,
                cfg.intersection_radius_m,
            );
            let places = providers
                .places
                .nearby_places(sample.coord, cfg.places_radius_m);
            match pano {
                Ok(pano) => {
                    let views = views_for(&pano.id, sample.heading, sample.kind);
                    let images = views
                        .iter()
                        .map(|v| providers.panoramas.render_view(v))
                        .collect();
                    Prefetched {
                        sample,
                        pano: Some(pano),
                        views,
                        images,
                        places,
                    }
                }
                Err(e) => Prefetched {
                    sample,
                    pano: None,
                    views: Vec::new(),
                    images: Err(e),
                    places,
                },
            }
        })
        .collect()
}

/// Runs a full preview. `on_segment` sees each segment as soon as it is final.
pub fn generate_preview(
    providers: &Providers,
    req: &PreviewRequest,
    cfg: &PreviewConfig,
    clock: &dyn Clock,
    on_segment: &mut dyn FnMut(&PreviewSegment),
) -> Result<PreviewResult, PreviewError> {
    if req.destination_name.trim().is_empty() {
        return Err(PreviewError::InvalidArgument(
            "destination name is empty".to_string(),
        ));
    }
    let origin = resolve(providers, &req.origin)?;
    let destination = resolve(providers, &req.destination)?;
    let route = providers
        .routes
        .get_route(origin, destination)
        .map_err(PreviewError::Route)?;
    let samples = geo::sample_route(&route.polyline, &cfg.sampling).map_err(|e| {
        PreviewError::Route(ProviderError::RouteUnavailable(e.to_string()))
    })?;

    let fetched = prefetch(providers, &route, samples, cfg);

    let mut segments = Vec::with_capacity(fetched.len());
    let mut prev_long: Option<String> = None;
    for (index, f) in fetched.iter().enumerate() {
        let mut seg = PreviewSegment {
            index,
            sample: f.sample.clone(),
            status: SegmentStatus::Failed,
            pano: f.pano.as_ref().map(|p| p.id.clone()),
            views: f.views.clone(),
            places: f.places.clone().unwrap_or_default(),
            prompt: None,
            triple: None,
            error: None,
        };
        match (&f.images, &f.places) {
            (Err(e), _) => {
                seg.status = SegmentStatus::ImageryUnavailable;
                seg.error = Some(e.to_string());
            }
            (Ok(_), Err(e)) => seg.error = Some(e.to_string()),
            (Ok(images), Ok(places)) => {
                let mut ctx = AgentContext::new(f.sample.heading.cardinal());
                ctx.nearby_places = places.clone();
                ctx.prev_description = prev_long.clone();
                let prompt = match f.sample.kind {
                    PointKind::Intersection => build_intersection_prompt(&ctx),
                    PointKind::MidBlock | PointKind::Destination => build_segment_prompt(&ctx),
                };
                match prompt {
                    Err(e) => seg.error = Some(e.to_string()),
                    Ok(prompt) => {
                        match ask(providers.model.as_ref(), &prompt, images, parse_triple) {
                            Ok(a) => {
                                prev_long = Some(a.value.long.clone());
                                seg.status = SegmentStatus::Described;
                                seg.triple = Some(a.value);
                            }
                            Err(e) => seg.error = Some(e.to_string()),
                        }
                        seg.prompt = Some(prompt.text);
                    }
                }
            }
        }
        if let Some(e) = &seg.error {
            tracing::warn!(segment = index, error = %e, "preview segment not described");
        }
        on_segment(&seg);
        segments.push(seg);
    }

    let mut approach: Vec<(PanoramaMeta, HeadingDeg)> = Vec::new();
    for f in fetched.iter().rev() {
        if approach.len() == cfg.approach_panos {
            break;
        }
        if let Some(p) = &f.pano {
            if !approach.iter().any(|(q, _)| q.id == p.id) {
                approach.push((p.clone(), f.sample.heading));
            }
        }
    }
    approach.reverse();
    let mut destination = DestinationOutcome {
        name: req.destination_name.clone(),
        approach: approach.iter().map(|(p, _)| p.id.clone()).collect(),
        views: Vec::new(),
        prompt: None,
        detail: None,
        error: None,
    };
    match describe_destination(providers, &approach, &req.context, &req.destination_name) {
        Ok((prompt, views, detail)) => {
            destination.prompt = Some(prompt.text);
            destination.views = views;
            destination.detail = Some(detail);
        }
        Err(e) => destination.error = Some(e.to_string()),
    }

    Ok(PreviewResult {
        schema: SCHEMA.to_string(),
        request: req.clone(),
        route,
        segments,
        destination,
        generated_at: clock.now(),
    })
}
