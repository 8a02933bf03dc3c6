//! Deterministic providers backed by a checked-in bundle directory:
//!
//! ```text
//! bundle/
//!   routes.json         [{origin, destination, route | unavailable}]
//!   panoramas.json      [PanoramaMeta]
//!   places.json         [PlaceRecord]
//!   mllm_script.json    {responses: [{key, response}], latency_ms?}
//!   tiles/{pano}_h{heading:03}_f{fov:03}.{png,jpg}   one view
//!   tiles/{pano}.{png,jpg}                          fallback for any view
//! ```
//!
//! Every call is a pure function of the bundle and the request.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::*;
use crate::geo;

/// The demo bundle checked in with this crate.
pub const DEMO_BUNDLE_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/demo");

pub const DEFAULT_SNAP_RADIUS_M: f64 = 25.0;
pub const FIXTURE_MAX_IMAGES: usize = 10;
const ROUTE_MATCH_RADIUS_M: f64 = 25.0;
const METERS_PER_DEGREE: f64 = 111_195.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RouteFixture {
    pub origin: GeoCoordinate,
    pub destination: GeoCoordinate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<RouteResult>,
    /// Reason reported when `route` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unavailable: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub key: String,
    pub response: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModelScript {
    pub responses: Vec<ScriptEntry>,
    #[serde(default)]
    pub latency_ms: u64,
}

/// Uniform lat/lon grid over the panoramas, with cells at least as wide as
/// the snap radius so a lookup only needs the 3x3 neighbourhood.
#[derive(Debug)]
struct PanoGrid {
    cell_lat: f64,
    cell_lon: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl PanoGrid {
    fn build(panos: &[PanoramaMeta], radius_m: f64) -> Self {
        let cell_lat = radius_m / METERS_PER_DEGREE;
        let max_lat = panos
            .iter()
            .map(|p| p.coord.lat().abs())
            .fold(0.0f64, f64::max);
        let widest = (max_lat + 2.0 * cell_lat).min(89.0).to_radians().cos();
        let cell_lon = (cell_lat / widest).min(360.0);
        let mut grid = Self {
            cell_lat,
            cell_lon,
            cells: HashMap::new(),
        };
        for (i, p) in panos.iter().enumerate() {
            grid.cells.entry(grid.cell(p.coord)).or_default().push(i);
        }
        grid
    }

    fn cell(&self, c: GeoCoordinate) -> (i64, i64) {
        (
            (c.lat() / self.cell_lat).floor() as i64,
            (c.lon() / self.cell_lon).floor() as i64,
        )
    }

    fn around(&self, c: GeoCoordinate) -> impl Iterator<Item = usize> + '_ {
        let (r, col) = self.cell(c);
        (-1..=1)
            .flat_map(move |dr| (-1..=1).map(move |dc| (r + dr, col + dc)))
            .filter_map(|k| self.cells.get(&k))
            .flatten()
            .copied()
    }
}

pub struct FixtureBundle {
    root: PathBuf,
    routes: Vec<RouteFixture>,
    panoramas: Vec<PanoramaMeta>,
    pano_index: HashMap<PanoId, usize>,
    places: Vec<PlaceRecord>,
    script: HashMap<String, String>,
    latency: Duration,
    snap_radius_m: f64,
    grid: PanoGrid,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> ProviderResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| ProviderError::Bundle(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| ProviderError::Bundle(format!("{}: {e}", path.display())))
}

impl FixtureBundle {
    pub fn load(root: impl AsRef<Path>) -> ProviderResult<Self> {
        let root = root.as_ref().to_path_buf();
        let routes: Vec<RouteFixture> = read_json(&root.join("routes.json"))?;
        let panoramas: Vec<PanoramaMeta> = read_json(&root.join("panoramas.json"))?;
        let places: Vec<PlaceRecord> = read_json(&root.join("places.json"))?;
        let script: ModelScript = read_json(&root.join("mllm_script.json"))?;

        let mut pano_index = HashMap::new();
        for (i, p) in panoramas.iter().enumerate() {
            p.validate()?;
            if pano_index.insert(p.id.clone(), i).is_some() {
                return Err(ProviderError::Bundle(format!("duplicate panorama {}", p.id)));
            }
        }
        for p in &panoramas {
            for link in &p.links {
                if !pano_index.contains_key(&link.target) {
                    return Err(ProviderError::Bundle(format!(
                        "panorama {} links to unknown {}",
                        p.id, link.target
                    )));
                }
            }
        }
        for r in routes.iter().filter_map(|r| r.route.as_ref()) {
            r.validate()?;
        }
        let mut entries = HashMap::new();
        for e in script.responses {
            if entries.insert(e.key.clone(), e.response).is_some() {
                return Err(ProviderError::Bundle(format!("duplicate script key {}", e.key)));
            }
        }
        let grid = PanoGrid::build(&panoramas, DEFAULT_SNAP_RADIUS_M);
        Ok(Self {
            root,
            routes,
            panoramas,
            pano_index,
            places,
            script: entries,
            latency: Duration::from_millis(script.latency_ms),
            snap_radius_m: DEFAULT_SNAP_RADIUS_M,
            grid,
        })
    }

    pub fn with_snap_radius(mut self, radius_m: f64) -> Self {
        self.snap_radius_m = radius_m;
        self.grid = PanoGrid::build(&self.panoramas, radius_m);
        self
    }

    /// Adds a fixed delay to every model call.
    pub fn with_model_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    /// Replaces or adds a scripted response.
    pub fn script(&mut self, key: impl Into<String>, response: impl Into<String>) {
        self.script.insert(key.into(), response.into());
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn panoramas(&self) -> &[PanoramaMeta] {
        &self.panoramas
    }

    pub fn snap_radius_m(&self) -> f64 {
        self.snap_radius_m
    }

    /// Script keys tried for a request, most specific first:
    /// `template:view,view`, `template:pano,pano`, `template`.
    pub fn script_keys(req: &MllmRequest) -> Vec<String> {
        let views: Vec<String> = req.images.iter().map(|i| i.id()).collect();
        let mut seen = BTreeSet::new();
        let panos: Vec<&str> = req
            .images
            .iter()
            .map(|i| i.source_view.pano.as_str())
            .filter(|p| seen.insert(*p))
            .collect();
        let mut keys = Vec::with_capacity(3);
        if !views.is_empty() {
            keys.push(format!("{}:{}", req.template_id, views.join(",")));
            keys.push(format!("{}:{}", req.template_id, panos.join(",")));
        }
        keys.push(req.template_id.clone());
        keys
    }

    /// The tile for an exact view, else the panorama-wide `{pano}.{ext}`.
    fn tile_path(&self, req: &ViewRequest) -> Option<(PathBuf, &'static str)> {
        let names = [req.view_id(), req.pano.to_string()];
        names.into_iter().find_map(|name| {
            [("png", "image/png"), ("jpg", "image/jpeg"), ("jpeg", "image/jpeg")]
                .into_iter()
                .map(|(ext, media)| (self.root.join("tiles").join(format!("{name}.{ext}")), media))
                .find(|(p, _)| p.is_file())
        })
    }
}

impl RouteProvider for FixtureBundle {
    fn get_route(
        &self,
        origin: GeoCoordinate,
        destination: GeoCoordinate,
    ) -> ProviderResult<RouteResult> {
        if geo::distance(origin, destination) < 1.0 {
            return Err(ProviderError::RouteUnavailable(
                "origin and destination coincide".to_string(),
            ));
        }
        let hit = self.routes.iter().find(|r| {
            geo::distance(r.origin, origin) <= ROUTE_MATCH_RADIUS_M
                && geo::distance(r.destination, destination) <= ROUTE_MATCH_RADIUS_M
        });
        match hit {
            Some(RouteFixture {
                route: Some(route), ..
            }) => Ok(route.clone()),
            Some(RouteFixture { unavailable, .. }) => Err(ProviderError::RouteUnavailable(
                unavailable
                    .clone()
                    .unwrap_or_else(|| "no route between these points".to_string()),
            )),
            None => Err(ProviderError::RouteUnavailable(format!(
                "no fixture route from {origin} to {destination}"
            ))),
        }
    }
}

impl PanoramaProvider for FixtureBundle {
    fn nearest_panorama(&self, coord: GeoCoordinate) -> ProviderResult<PanoramaMeta> {
        self.grid
            .around(coord)
            .map(|i| (geo::distance(coord, self.panoramas[i].coord), i))
            .filter(|(d, _)| *d <= self.snap_radius_m)
            .min_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then_with(|| self.panoramas[a.1].id.cmp(&self.panoramas[b.1].id))
            })
            .map(|(_, i)| self.panoramas[i].clone())
            .ok_or(ProviderError::NoCoverage {
                coord,
                radius_m: self.snap_radius_m,
            })
    }

    fn panorama(&self, id: &PanoId) -> ProviderResult<PanoramaMeta> {
        self.pano_index
            .get(id)
            .map(|&i| self.panoramas[i].clone())
            .ok_or_else(|| ProviderError::NotFound(format!("panorama {id}")))
    }

    fn render_view(&self, req: &ViewRequest) -> ProviderResult<ImageRef> {
        req.validate()?;
        if !self.pano_index.contains_key(&req.pano) {
            return Err(ProviderError::NotFound(format!("panorama {}", req.pano)));
        }
        let id = req.view_id();
        let (path, media) = self
            .tile_path(req)
            .ok_or_else(|| ProviderError::NotFound(format!("tile {id}")))?;
        let bytes = fs::read(&path)
            .map_err(|e| ProviderError::Bundle(format!("{}: {e}", path.display())))?;
        ImageRef::new(bytes, media, req.clone())
    }
}

impl PlacesProvider for FixtureBundle {
    fn nearby_places(&self, coord: GeoCoordinate, radius_m: f64) -> ProviderResult<Vec<Place>> {
        validate_radius(radius_m)?;
        Ok(places_around(coord, radius_m, self.places.iter().cloned()))
    }

    fn resolve(&self, query: &str) -> ProviderResult<GeoCoordinate> {
        if let Ok(c) = query.parse::<GeoCoordinate>() {
            return Ok(c);
        }
        let q = query.trim().to_lowercase();
        self.places
            .iter()
            .find(|p| p.name.to_lowercase() == q)
            .map(|p| p.coord)
            .ok_or_else(|| ProviderError::NotFound(format!("place {query:?}")))
    }
}

impl LanguageModel for FixtureBundle {
    fn complete(&self, req: &MllmRequest) -> ProviderResult<String> {
        req.validate(FIXTURE_MAX_IMAGES)?;
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let keys = Self::script_keys(req);
        if let Some(hit) = keys.iter().find_map(|k| self.script.get(k)) {
            return Ok(hit.clone());
        }
        // report the pano-level key, which is what bundles usually author
        let key = if keys.len() > 1 { &keys[1] } else { &keys[0] };
        Err(ProviderError::ScriptedMiss { key: key.clone() })
    }
}
