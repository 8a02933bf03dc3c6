use serde::Deserialize;

use super::HttpClient;
use crate::geo::GeoCoordinate;
use crate::providers::*;

const CATEGORY_TAGS: [&str; 6] = [
    "amenity",
    "shop",
    "public_transport",
    "tourism",
    "leisure",
    "highway",
];

/// Named points of interest from an Overpass API interpreter endpoint.
pub struct OverpassPlaces {
    http: HttpClient,
    endpoint: String,
}

#[derive(Debug, Deserialize)]
struct OverpassResponse {
    elements: Vec<OverpassElement>,
}

#[derive(Debug, Deserialize)]
struct OverpassElement {
    #[serde(default)]
    lat: Option<f64>,
    #[serde(default)]
    lon: Option<f64>,
    #[serde(default)]
    center: Option<OverpassCenter>,
    #[serde(default)]
    tags: std::collections::BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
struct OverpassCenter {
    lat: f64,
    lon: f64,
}

impl OverpassPlaces {
    pub fn new(http: HttpClient, endpoint: impl Into<String>) -> Self {
        Self {
            http,
            endpoint: endpoint.into(),
        }
    }

    pub fn around_query(coord: GeoCoordinate, radius_m: f64) -> String {
        let around = format!("around:{:.0},{:.7},{:.7}", radius_m, coord.lat(), coord.lon());
        let clauses: String = CATEGORY_TAGS
            .iter()
            .map(|t| format!("nwr({around})[name][{t}];"))
            .collect();
        format!("[out:json][timeout:25];({clauses});out center;")
    }

    fn name_query(name: &str) -> String {
        let escaped = name.replace('\\', "\\\\").replace('"', "\\\"");
        format!("[out:json][timeout:25];nwr[\"name\"=\"{escaped}\"];out center 1;")
    }

    fn run(&self, query: String) -> ProviderResult<Vec<PlaceRecord>> {
        let resp: OverpassResponse = self
            .http
            .get_json(|c| c.post(&self.endpoint).form(&[("data", query.as_str())]))?;
        Ok(parse_elements(resp))
    }
}

fn parse_elements(resp: OverpassResponse) -> Vec<PlaceRecord> {
    resp.elements
        .into_iter()
        .filter_map(|e| {
            let (lat, lon) = match (e.lat, e.lon, &e.center) {
                (Some(lat), Some(lon), _) => (lat, lon),
                (_, _, Some(c)) => (c.lat, c.lon),
                _ => return None,
            };
            let name = e.tags.get("name")?.clone();
            let category = CATEGORY_TAGS
                .iter()
                .find_map(|t| e.tags.get(*t))
                .map(|v| v.replace('_', " "))
                .unwrap_or_else(|| "place".to_string());
            Some(PlaceRecord {
                name,
                category,
                coord: GeoCoordinate::new(lat, lon).ok()?,
            })
        })
        .collect()
}

impl PlacesProvider for OverpassPlaces {
    fn nearby_places(&self, coord: GeoCoordinate, radius_m: f64) -> ProviderResult<Vec<Place>> {
        validate_radius(radius_m)?;
        let records = self.run(Self::around_query(coord, radius_m))?;
        let mut places = places_around(coord, radius_m, records);
        places.dedup_by(|a, b| a.name == b.name && a.coord == b.coord);
        Ok(places)
    }

    fn resolve(&self, query: &str) -> ProviderResult<GeoCoordinate> {
        if let Ok(c) = query.parse::<GeoCoordinate>() {
            return Ok(c);
        }
        self.run(Self::name_query(query.trim()))?
            .into_iter()
            .next()
            .map(|r| r.coord)
            .ok_or_else(|| ProviderError::NotFound(format!("place {query:?}")))
    }
}
