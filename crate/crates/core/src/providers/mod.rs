//! Contracts for every external data source, with a file-backed fixture
//! implementation and live HTTP adapters.

pub mod cache;
pub mod fixture;
pub mod live;
pub mod retry;

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{self, Cardinal, GeoCoordinate, HeadingDeg, Polyline};

pub use cache::CachedPanoramas;
pub use fixture::FixtureBundle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no walking route available: {0}")]
    RouteUnavailable(String),
    #[error("no panorama within {radius_m} m of {coord}")]
    NoCoverage { coord: GeoCoordinate, radius_m: f64 },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("no scripted response for key {key:?}")]
    ScriptedMiss { key: String },
    #[error("rate limited, retry after {retry_after_ms} ms")]
    RateLimited { retry_after_ms: u64 },
    #[error("provider request failed: {message}")]
    Http {
        status: Option<u16>,
        message: String,
        retryable: bool,
        attempts: u32,
    },
    #[error("provider call timed out")]
    Timeout,
    #[error("malformed provider response: {0}")]
    Decode(String),
    #[error("fixture bundle error: {0}")]
    Bundle(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::RateLimited { .. } | ProviderError::Timeout => true,
            ProviderError::Http { retryable, .. } => *retryable,
            _ => false,
        }
    }

    pub fn retry_after(&self) -> Option<Duration> {
        match self {
            ProviderError::RateLimited { retry_after_ms } => {
                Some(Duration::from_millis(*retry_after_ms))
            }
            _ => None,
        }
    }
}

impl From<geo::GeoError> for ProviderError {
    fn from(e: geo::GeoError) -> Self {
        ProviderError::InvalidArgument(e.to_string())
    }
}

pub type ProviderResult<T> = Result<T, ProviderError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManeuverKind {
    Depart,
    TurnLeft,
    TurnRight,
    Continue,
    Arrive,
    CrossIntersection,
}

impl ManeuverKind {
    /// Maneuvers that happen at a street crossing.
    pub fn is_intersection(self) -> bool {
        matches!(
            self,
            ManeuverKind::TurnLeft | ManeuverKind::TurnRight | ManeuverKind::CrossIntersection
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteStep {
    pub maneuver_kind: ManeuverKind,
    pub location: GeoCoordinate,
    pub street_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResult {
    pub polyline: Polyline,
    pub steps: Vec<RouteStep>,
    pub total_length_m: f64,
}

impl RouteResult {
    /// Checks step ordering: Depart first, Arrive last.
    pub fn validate(&self) -> ProviderResult<()> {
        match (self.steps.first(), self.steps.last()) {
            (Some(first), Some(last))
                if first.maneuver_kind == ManeuverKind::Depart
                    && last.maneuver_kind == ManeuverKind::Arrive =>
            {
                Ok(())
            }
            _ => Err(ProviderError::Decode(
                "route steps must start with Depart and end with Arrive".to_string(),
            )),
        }
    }
}

/// Opaque panorama identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PanoId(pub String);

impl PanoId {
    pub fn new(id: impl Into<String>) -> Self {
        PanoId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PanoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoLink {
    pub heading: HeadingDeg,
    pub target: PanoId,
    /// Street the link travels along, when the provider knows it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub street: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoramaMeta {
    pub id: PanoId,
    pub coord: GeoCoordinate,
    /// `YYYY-MM`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture_date: Option<String>,
    pub links: Vec<PanoLink>,
}

impl PanoramaMeta {
    pub fn validate(&self) -> ProviderResult<()> {
        if let Some(link) = self.links.iter().find(|l| l.target == self.id) {
            return Err(ProviderError::Decode(format!(
                "panorama {} links to itself at {}",
                self.id, link.heading
            )));
        }
        Ok(())
    }

    pub fn degree(&self) -> usize {
        self.links.len()
    }
}

pub const MAX_FOV_DEG: f64 = 120.0;
pub const MAX_PITCH_DEG: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRequest {
    pub pano: PanoId,
    pub heading: HeadingDeg,
    pub fov_deg: f64,
    #[serde(default)]
    pub pitch_deg: f64,
}

impl ViewRequest {
    pub fn new(pano: PanoId, heading: HeadingDeg, fov_deg: f64) -> Self {
        Self {
            pano,
            heading,
            fov_deg,
            pitch_deg: 0.0,
        }
    }

    pub fn validate(&self) -> ProviderResult<()> {
        if !(self.fov_deg > 0.0 && self.fov_deg <= MAX_FOV_DEG) {
            return Err(ProviderError::InvalidArgument(format!(
                "fov {} outside (0, {MAX_FOV_DEG}]",
                self.fov_deg
            )));
        }
        if !(-MAX_PITCH_DEG..=MAX_PITCH_DEG).contains(&self.pitch_deg) {
            return Err(ProviderError::InvalidArgument(format!(
                "pitch {} outside [-{MAX_PITCH_DEG}, {MAX_PITCH_DEG}]",
                self.pitch_deg
            )));
        }
        Ok(())
    }

    /// Stable name of the rendered view: `{pano}_h{heading:03}_f{fov:03}`.
    pub fn view_id(&self) -> String {
        format!(
            "{}_h{:03}_f{:03}",
            self.pano,
            self.heading.rounded(),
            self.fov_deg.round() as u32
        )
    }
}

/// A rendered perspective image.
#[derive(Clone, PartialEq)]
pub struct ImageRef {
    pub bytes: Arc<[u8]>,
    pub media_type: String,
    pub source_view: ViewRequest,
}

impl ImageRef {
    pub fn new(bytes: Vec<u8>, media_type: &str, source_view: ViewRequest) -> ProviderResult<Self> {
        if bytes.is_empty() {
            return Err(ProviderError::Decode(format!(
                "empty image for {}",
                source_view.view_id()
            )));
        }
        Ok(Self {
            bytes: bytes.into(),
            media_type: media_type.to_string(),
            source_view,
        })
    }

    pub fn id(&self) -> String {
        self.source_view.view_id()
    }
}

impl fmt::Debug for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageRef")
            .field("id", &self.id())
            .field("media_type", &self.media_type)
            .field("len", &self.bytes.len())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Place {
    pub name: String,
    pub category: String,
    pub coord: GeoCoordinate,
    pub distance_m: f64,
    pub relative_direction: Cardinal,
}

/// A place as the provider knows it, before it is related to a query point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceRecord {
    pub name: String,
    pub category: String,
    pub coord: GeoCoordinate,
}

pub const MAX_PLACES_RADIUS_M: f64 = 500.0;

pub fn validate_radius(radius_m: f64) -> ProviderResult<()> {
    if !(radius_m > 0.0 && radius_m <= MAX_PLACES_RADIUS_M) {
        return Err(ProviderError::InvalidArgument(format!(
            "radius {radius_m} outside (0, {MAX_PLACES_RADIUS_M}]"
        )));
    }
    Ok(())
}

/// Relates raw place records to `origin`: keeps those within `radius_m`,
/// labels direction and sorts nearest first (ties by name).
pub fn places_around(
    origin: GeoCoordinate,
    radius_m: f64,
    records: impl IntoIterator<Item = PlaceRecord>,
) -> Vec<Place> {
    let mut places: Vec<Place> = records
        .into_iter()
        .filter_map(|r| {
            let distance_m = geo::distance(origin, r.coord);
            if distance_m > radius_m {
                return None;
            }
            let relative_direction = geo::initial_bearing(origin, r.coord)
                .map(geo::cardinal_of)
                .unwrap_or(Cardinal::North);
            Some(Place {
                name: r.name,
                category: r.category,
                coord: r.coord,
                distance_m,
                relative_direction,
            })
        })
        .collect();
    places.sort_by(|a, b| {
        a.distance_m
            .total_cmp(&b.distance_m)
            .then_with(|| a.name.cmp(&b.name))
    });
    places
}

#[derive(Debug, Clone, PartialEq)]
pub struct MllmRequest {
    /// Which prompt template produced the text; fixture models key on it.
    pub template_id: String,
    pub text: String,
    pub images: Vec<ImageRef>,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl MllmRequest {
    pub fn new(template_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            template_id: template_id.into(),
            text: text.into(),
            images: Vec::new(),
            max_tokens: 1024,
            temperature: 0.2,
        }
    }

    pub fn with_images(mut self, images: Vec<ImageRef>) -> Self {
        self.images = images;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn validate(&self, max_images: usize) -> ProviderResult<()> {
        if self.text.trim().is_empty() {
            return Err(ProviderError::InvalidArgument(
                "prompt text is empty".to_string(),
            ));
        }
        if self.images.len() > max_images {
            return Err(ProviderError::InvalidArgument(format!(
                "{} images exceeds provider limit of {max_images}",
                self.images.len()
            )));
        }
        if !(self.temperature >= 0.0) {
            return Err(ProviderError::InvalidArgument(format!(
                "temperature {} must be >= 0",
                self.temperature
            )));
        }
        Ok(())
    }
}

pub trait RouteProvider: Send + Sync {
    fn get_route(
        &self,
        origin: GeoCoordinate,
        destination: GeoCoordinate,
    ) -> ProviderResult<RouteResult>;
}

pub trait PanoramaProvider: Send + Sync {
    fn nearest_panorama(&self, coord: GeoCoordinate) -> ProviderResult<PanoramaMeta>;
    fn panorama(&self, id: &PanoId) -> ProviderResult<PanoramaMeta>;
    fn render_view(&self, req: &ViewRequest) -> ProviderResult<ImageRef>;
}

pub trait PlacesProvider: Send + Sync {
    fn nearby_places(&self, coord: GeoCoordinate, radius_m: f64) -> ProviderResult<Vec<Place>>;
    /// Resolves a free-text place query to a coordinate.
    fn resolve(&self, query: &str) -> ProviderResult<GeoCoordinate>;
}

pub trait LanguageModel: Send + Sync {
    fn complete(&self, req: &MllmRequest) -> ProviderResult<String>;
}

impl<T: RouteProvider + ?Sized> RouteProvider for Arc<T> {
    fn get_route(&self, origin: GeoCoordinate, destination: GeoCoordinate) -> ProviderResult<RouteResult> {
        (**self).get_route(origin, destination)
    }
}

impl<T: PanoramaProvider + ?Sized> PanoramaProvider for Arc<T> {
    fn nearest_panorama(&self, coord: GeoCoordinate) -> ProviderResult<PanoramaMeta> {
        (**self).nearest_panorama(coord)
    }
    fn panorama(&self, id: &PanoId) -> ProviderResult<PanoramaMeta> {
        (**self).panorama(id)
    }
    fn render_view(&self, req: &ViewRequest) -> ProviderResult<ImageRef> {
        (**self).render_view(req)
    }
}

impl<T: PlacesProvider + ?Sized> PlacesProvider for Arc<T> {
    fn nearby_places(&self, coord: GeoCoordinate, radius_m: f64) -> ProviderResult<Vec<Place>> {
        (**self).nearby_places(coord, radius_m)
    }
    fn resolve(&self, query: &str) -> ProviderResult<GeoCoordinate> {
        (**self).resolve(query)
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for Arc<T> {
    fn complete(&self, req: &MllmRequest) -> ProviderResult<String> {
        (**self).complete(req)
    }
}

/// The full set of providers an agent runs against.
#[derive(Clone)]
pub struct Providers {
    pub routes: Arc<dyn RouteProvider>,
    pub panoramas: Arc<dyn PanoramaProvider>,
    pub places: Arc<dyn PlacesProvider>,
    pub model: Arc<dyn LanguageModel>,
}

impl Providers {
    /// All four providers backed by one fixture bundle.
    pub fn from_bundle(bundle: Arc<FixtureBundle>) -> Self {
        Self {
            routes: bundle.clone(),
            panoramas: bundle.clone(),
            places: bundle.clone(),
            model: bundle,
        }
    }
}
