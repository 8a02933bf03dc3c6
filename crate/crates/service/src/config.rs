//! Service configuration: an optional TOML file, then `SCENESCOUT_*`
//! environment overrides.
//!
//! ```toml
//! mode = "fixture"                 # or "live"
//! fixture_dir = "crates/core/fixtures/demo"
//! data_dir = "scenescout-data"
//! bind = "127.0.0.1:8080"
//! api_token = "secret"             # optional bearer token
//! call_timeout_ms = 60000
//! step_budget = 200
//! places_radius_m = 100.0
//! min_interval_m = 30.0
//! max_interval_m = 40.0
//! snap_radius_m = 25.0
//! cache_budget_bytes = 67108864
//!
//! [live]
//! route_url = "https://router.project-osrm.org"
//! panorama_url = "https://panoramas.example.org"
//! panorama_key = "..."
//! places_url = "https://overpass-api.de/api/interpreter"
//! model_url = "https://api.openai.com/v1"
//! model_key = "..."
//! model_name = "gpt-4o"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use scenescout_core::geo::SamplingConfig;
use scenescout_core::preview::PreviewConfig;
use scenescout_core::providers::fixture::{DEFAULT_SNAP_RADIUS_M, DEMO_BUNDLE_DIR};
use scenescout_core::providers::live::{
    ChatCompletionsModel, HttpClient, OsrmRoutes, OverpassPlaces, PanoramaGateway,
};
use scenescout_core::providers::retry::{RetryPolicy, TokenBucket};
use scenescout_core::providers::{CachedPanoramas, FixtureBundle, ProviderError, Providers};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Fixture,
    Live,
}

impl ProviderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderMode::Fixture => "fixture",
            ProviderMode::Live => "live",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiveConfig {
    pub route_url: String,
    pub panorama_url: String,
    pub panorama_key: Option<String>,
    pub places_url: String,
    pub model_url: String,
    pub model_key: Option<String>,
    pub model_name: String,
    pub http_timeout_ms: u64,
    /// Shared across every session and provider.
    pub requests_per_second: f64,
    pub burst: u32,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            route_url: "https://router.project-osrm.org".into(),
            panorama_url: String::new(),
            panorama_key: None,
            places_url: "https://overpass-api.de/api/interpreter".into(),
            model_url: "https://api.openai.com/v1".into(),
            model_key: None,
            model_name: "gpt-4o".into(),
            http_timeout_ms: 30_000,
            requests_per_second: 5.0,
            burst: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub mode: ProviderMode,
    pub fixture_dir: PathBuf,
    pub data_dir: PathBuf,
    pub bind: String,
    pub api_token: Option<String>,
    pub call_timeout_ms: u64,
    pub step_budget: u32,
    pub places_radius_m: f64,
    pub min_interval_m: f64,
    pub max_interval_m: f64,
    /// How far a coordinate may be from the panorama it snaps to.
    pub snap_radius_m: f64,
    /// Rendered image cache, shared by all sessions.
    pub cache_budget_bytes: usize,
    pub live: LiveConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            mode: ProviderMode::Fixture,
            fixture_dir: PathBuf::from(DEMO_BUNDLE_DIR),
            data_dir: PathBuf::from("scenescout-data"),
            bind: "127.0.0.1:8080".into(),
            api_token: None,
            call_timeout_ms: 60_000,
            step_budget: scenescout_core::exploration::DEFAULT_STEP_BUDGET,
            places_radius_m: 100.0,
            min_interval_m: 30.0,
            max_interval_m: 40.0,
            snap_radius_m: DEFAULT_SNAP_RADIUS_M,
            cache_budget_bytes: 64 << 20,
            live: LiveConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config file: {0}")]
    Parse(String),
    #[error("invalid value in {var}: {message}")]
    Env { var: String, message: String },
    #[error("live mode needs {0}")]
    MissingCredential(&'static str),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot set up providers: {0}")]
    Providers(#[from] ProviderError),
}

impl ConfigError {
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::MissingCredential(_) => "missing_credentials",
            _ => "config_error",
        }
    }
}

fn parse_env<T: std::str::FromStr>(var: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.trim().parse().map_err(|e: T::Err| ConfigError::Env {
        var: var.to_string(),
        message: e.to_string(),
    })
}

impl Config {
    /// Reads `path` if given, then applies overrides from `env`.
    pub fn load(
        path: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Read {
                    path: p.display().to_string(),
                    message: e.to_string(),
                })?;
                toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?
            }
            None => Config::default(),
        };
        cfg.apply_env(env)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_process_env(path: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load(path, |k| std::env::var(k).ok())
    }

    fn apply_env(&mut self, env: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        let get = |k: &str| env(&format!("SCENESCOUT_{k}")).filter(|v| !v.trim().is_empty());
        let var = |k: &str| format!("SCENESCOUT_{k}");
        if let Some(v) = get("MODE") {
            self.mode = match v.trim().to_lowercase().as_str() {
                "fixture" => ProviderMode::Fixture,
                "live" => ProviderMode::Live,
                other => {
                    return Err(ConfigError::Env {
                        var: var("MODE"),
                        message: format!("expected fixture or live, got {other:?}"),
                    })
                }
            };
        }
        if let Some(v) = get("FIXTURE_DIR") {
            self.fixture_dir = v.into();
        }
        if let Some(v) = get("DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = get("BIND") {
            self.bind = v;
        }
        if let Some(v) = get("API_TOKEN") {
            self.api_token = Some(v);
        }
        if let Some(v) = get("CALL_TIMEOUT_MS") {
            self.call_timeout_ms = parse_env(&var("CALL_TIMEOUT_MS"), &v)?;
        }
        if let Some(v) = get("STEP_BUDGET") {
            self.step_budget = parse_env(&var("STEP_BUDGET"), &v)?;
        }
        if let Some(v) = get("PLACES_RADIUS_M") {
            self.places_radius_m = parse_env(&var("PLACES_RADIUS_M"), &v)?;
        }
        for (k, slot) in [
            ("MIN_INTERVAL_M", &mut self.min_interval_m),
            ("MAX_INTERVAL_M", &mut self.max_interval_m),
            ("SNAP_RADIUS_M", &mut self.snap_radius_m),
        ] {
            if let Some(v) = get(k) {
                *slot = parse_env(&var(k), &v)?;
            }
        }
        if let Some(v) = get("CACHE_BUDGET_BYTES") {
            self.cache_budget_bytes = parse_env(&var("CACHE_BUDGET_BYTES"), &v)?;
        }
        let live = &mut self.live;
        if let Some(v) = get("ROUTE_URL") {
            live.route_url = v;
        }
        if let Some(v) = get("PANORAMA_URL") {
            live.panorama_url = v;
        }
        if let Some(v) = get("PANORAMA_KEY") {
            live.panorama_key = Some(v);
        }
        if let Some(v) = get("PLACES_URL") {
            live.places_url = v;
        }
        if let Some(v) = get("MODEL_URL") {
            live.model_url = v;
        }
        if let Some(v) = get("MODEL_KEY") {
            live.model_key = Some(v);
        }
        if let Some(v) = get("MODEL_NAME") {
            live.model_name = v;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.call_timeout_ms == 0 {
            return Err(ConfigError::Invalid("call_timeout_ms must be positive".into()));
        }
        if self.step_budget == 0 {
            return Err(ConfigError::Invalid("step_budget must be positive".into()));
        }
        scenescout_core::providers::validate_radius(self.places_radius_m)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.sampling()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.snap_radius_m.is_finite() && self.snap_radius_m > 0.0) {
            return Err(ConfigError::Invalid("snap_radius_m must be positive".into()));
        }
        if self.mode == ProviderMode::Live {
            let blank = |s: &Option<String>| s.as_deref().is_none_or(|s| s.trim().is_empty());
            if blank(&self.live.model_key) {
                return Err(ConfigError::MissingCredential("a model API key (SCENESCOUT_MODEL_KEY)"));
            }
            if self.live.panorama_url.trim().is_empty() {
                return Err(ConfigError::MissingCredential(
                    "a panorama gateway URL (SCENESCOUT_PANORAMA_URL)",
                ));
            }
            if blank(&self.live.panorama_key) {
                return Err(ConfigError::MissingCredential(
                    "a panorama API key (SCENESCOUT_PANORAMA_KEY)",
                ));
            }
            if !(self.live.requests_per_second > 0.0) || self.live.burst == 0 {
                return Err(ConfigError::Invalid("rate limit must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn call_timeout(&self) -> Duration {
        Duration::from_millis(self.call_timeout_ms)
    }

    pub fn exploration(&self) -> scenescout_core::exploration::ExplorationConfig {
        scenescout_core::exploration::ExplorationConfig {
            step_budget: self.step_budget,
            places_radius_m: self.places_radius_m,
        }
    }

    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            min_interval_m: self.min_interval_m,
            max_interval_m: self.max_interval_m,
        }
    }

    pub fn preview(&self) -> PreviewConfig {
        PreviewConfig {
            sampling: self.sampling(),
            places_radius_m: self.places_radius_m,
            ..PreviewConfig::default()
        }
    }

    pub fn build_providers(&self) -> Result<Providers, ConfigError> {
        match self.mode {
            ProviderMode::Fixture => {
                let bundle = Arc::new(
                    FixtureBundle::load(&self.fixture_dir)?.with_snap_radius(self.snap_radius_m),
                );
                let mut p = Providers::from_bundle(bundle.clone());
                p.panoramas = Arc::new(CachedPanoramas::new(bundle, self.cache_budget_bytes));
                Ok(p)
            }
            ProviderMode::Live => {
                let live = &self.live;
                let limiter = Arc::new(TokenBucket::new(live.burst, live.requests_per_second));
                let http = HttpClient::new(Duration::from_millis(live.http_timeout_ms), RetryPolicy::default())?
                    .with_limiter(limiter);
                let panoramas = PanoramaGateway::new(
                    http.clone(),
                    live.panorama_url.clone(),
                    live.panorama_key.clone(),
                )
                .with_snap_radius(self.snap_radius_m);
                Ok(Providers {
                    routes: Arc::new(OsrmRoutes::new(http.clone(), live.route_url.clone())),
                    panoramas: Arc::new(CachedPanoramas::new(panoramas, self.cache_budget_bytes)),
                    places: Arc::new(OverpassPlaces::new(http.clone(), live.places_url.clone())),
                    model: Arc::new(ChatCompletionsModel::new(
                        http,
                        live.model_url.clone(),
                        live.model_key.clone().unwrap_or_default(),
                        live.model_name.clone(),
                    )),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let m: HashMap<String, String> =
            pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| m.get(k).cloned()
    }

    #[test]
    fn env_overrides_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "bind = \"0.0.0.0:9\"\nstep_budget = 7\n").unwrap();
        let cfg = Config::load(Some(&p), env(&[("SCENESCOUT_STEP_BUDGET", "9")])).unwrap();
        assert_eq!(cfg.bind, "0.0.0.0:9");
        assert_eq!(cfg.step_budget, 9);
    }

    #[test]
    fn live_without_credentials_is_rejected() {
        let err = Config::load(None, env(&[("SCENESCOUT_MODE", "live")])).unwrap_err();
        assert!(matches!(err, ConfigError::MissingCredential(_)));
        let ok = Config::load(
            None,
            env(&[
                ("SCENESCOUT_MODE", "live"),
                ("SCENESCOUT_MODEL_KEY", "k"),
                ("SCENESCOUT_PANORAMA_URL", "http://127.0.0.1:1"),
                ("SCENESCOUT_PANORAMA_KEY", "p"),
            ]),
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "colour = 1\n").unwrap();
        assert!(matches!(Config::load(Some(&p), env(&[])), Err(ConfigError::Parse(_))));
        assert!(matches!(
            Config::load(None, env(&[("SCENESCOUT_STEP_BUDGET", "many")])),
            Err(ConfigError::Env { .. })
        ));
        assert!(matches!(
            Config::load(None, env(&[("SCENESCOUT_MIN_INTERVAL_M", "50")])),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            Config::load(None, env(&[("SCENESCOUT_MODE", "mock")])),
            Err(ConfigError::Env { .. })
        ));
    }
}
