//! Client for a panorama gateway with this contract:
//!
//! ```text
//! GET {base}/v1/panoramas/nearest?lat=..&lon=..&radius=..  -> PanoramaMeta | 404
//! GET {base}/v1/panoramas/{id}                            -> PanoramaMeta | 404
//! GET {base}/v1/panoramas/{id}/view?heading=..&fov=..&pitch=..&size=WxH -> image bytes
//! ```
//!
//! `PanoramaMeta` is the same JSON the fixture bundles use.

use super::{join_url, HttpClient};
use crate::geo::GeoCoordinate;
use crate::providers::*;

pub struct PanoramaGateway {
    http: HttpClient,
    base_url: String,
    api_key: Option<String>,
    snap_radius_m: f64,
    image_size: (u32, u32),
}

impl PanoramaGateway {
    pub fn new(http: HttpClient, base_url: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            http,
            base_url: base_url.into(),
            api_key,
            snap_radius_m: fixture::DEFAULT_SNAP_RADIUS_M,
            image_size: (640, 640),
        }
    }

    pub fn with_snap_radius(mut self, radius_m: f64) -> Self {
        self.snap_radius_m = radius_m;
        self
    }

    pub fn with_image_size(mut self, width: u32, height: u32) -> Self {
        self.image_size = (width, height);
        self
    }

    fn authed(&self, rb: reqwest::blocking::RequestBuilder) -> reqwest::blocking::RequestBuilder {
        match &self.api_key {
            Some(k) => rb.bearer_auth(k),
            None => rb,
        }
    }

    fn fetch_meta(&self, url: &str, query: &[(&str, String)]) -> ProviderResult<PanoramaMeta> {
        let meta: PanoramaMeta = self
            .http
            .get_json(|c| self.authed(c.get(url).query(query)))?;
        meta.validate()?;
        Ok(meta)
    }
}

impl PanoramaProvider for PanoramaGateway {
    fn nearest_panorama(&self, coord: GeoCoordinate) -> ProviderResult<PanoramaMeta> {
        let url = join_url(&self.base_url, "v1/panoramas/nearest");
        let query = [
            ("lat", format!("{:.7}", coord.lat())),
            ("lon", format!("{:.7}", coord.lon())),
            ("radius", format!("{}", self.snap_radius_m)),
        ];
        let meta = match self.fetch_meta(&url, &query) {
            Err(ProviderError::NotFound(_)) => {
                return Err(ProviderError::NoCoverage {
                    coord,
                    radius_m: self.snap_radius_m,
                })
            }
            other => other?,
        };
        if crate::geo::distance(coord, meta.coord) > self.snap_radius_m {
            return Err(ProviderError::NoCoverage {
                coord,
                radius_m: self.snap_radius_m,
            });
        }
        Ok(meta)
    }

    fn panorama(&self, id: &PanoId) -> ProviderResult<PanoramaMeta> {
        let url = join_url(&self.base_url, &format!("v1/panoramas/{id}"));
        self.fetch_meta(&url, &[])
    }

    fn render_view(&self, req: &ViewRequest) -> ProviderResult<ImageRef> {
        req.validate()?;
        let url = join_url(&self.base_url, &format!("v1/panoramas/{}/view", req.pano));
        let query = [
            ("heading", format!("{:.2}", req.heading.value())),
            ("fov", format!("{:.2}", req.fov_deg)),
            ("pitch", format!("{:.2}", req.pitch_deg)),
            ("size", format!("{}x{}", self.image_size.0, self.image_size.1)),
        ];
        let resp = self
            .http
            .send(true, |c| self.authed(c.get(&url).query(&query)))?;
        let media = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or("image/jpeg")
            .to_string();
        let bytes = resp
            .bytes()
            .map_err(|e| ProviderError::Decode(e.to_string()))?;
        ImageRef::new(bytes.to_vec(), &media, req.clone())
    }
}
