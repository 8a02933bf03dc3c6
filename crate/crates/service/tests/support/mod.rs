#![allow(dead_code)]

use std::path::Path;
use std::time::Duration;

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use scenescout::api::{router, AppState, SharedState};
use scenescout::config::Config;
use scenescout_core::providers::Providers;
use serde_json::Value;
use tower::ServiceExt;

pub const INTENT: &str = "I want to find a quiet park to read in.";
pub const START: &str = "40.723,-73.945";

pub fn start_json() -> Value {
    serde_json::json!({ "lat": 40.723, "lon": -73.945 })
}

pub fn config(dir: &Path) -> Config {
    Config {
        data_dir: dir.join("data"),
        ..Config::default()
    }
}

pub fn state(cfg: Config) -> SharedState {
    AppState::new(cfg).expect("state starts")
}

pub fn state_with(cfg: Config, providers: Providers) -> SharedState {
    AppState::with_providers(cfg, providers).expect("state starts")
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Value,
}

#[derive(Clone)]
pub struct Client {
    router: Router,
}

impl Client {
    pub fn new(st: SharedState) -> Self {
        Self { router: router(st) }
    }

    pub async fn send(
        &self,
        method: Method,
        path: &str,
        body: Option<&Value>,
        headers: &[(&str, &str)],
    ) -> Reply {
        let mut req = Request::builder().method(method).uri(path);
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(serde_json::to_vec(b).unwrap())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let body = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        Reply {
            status,
            headers,
            body,
        }
    }

    pub async fn get(&self, path: &str) -> Reply {
        self.send(Method::GET, path, None, &[]).await
    }

    pub async fn post(&self, path: &str, body: &Value) -> Reply {
        self.send(Method::POST, path, Some(body), &[]).await
    }

    pub async fn post_empty(&self, path: &str) -> Reply {
        self.send(Method::POST, path, None, &[]).await
    }

    /// Polls a preview until it finishes.
    pub async fn wait_preview(&self, id: &str) -> Value {
        for _ in 0..400 {
            let r = self.get(&format!("/v1/preview/{id}")).await;
            assert_eq!(r.status, StatusCode::OK);
            if matches!(r.body["status"].as_str(), Some("complete" | "failed")) {
                return r.body;
            }
            tokio::time::sleep(Duration::from_millis(25)).await;
        }
        panic!("preview {id} did not finish");
    }

    pub async fn create_session(&self) -> String {
        let r = self
            .post("/v1/explore", &serde_json::json!({ "intent": INTENT, "start": start_json() }))
            .await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.body);
        r.body["session_id"].as_str().unwrap().to_string()
    }

    /// Steps until the session leaves the walking state; returns the kinds
    /// seen.
    pub async fn walk(&self, id: &str) -> Vec<String> {
        let mut kinds = Vec::new();
        loop {
            let r = self.post_empty(&format!("/v1/explore/{id}/step")).await;
            assert_eq!(r.status, StatusCode::OK, "{}", r.body);
            let k = r.body["kind"].as_str().unwrap().to_string();
            kinds.push(k.clone());
            if k != "block" {
                return kinds;
            }
        }
    }
}

pub fn preview_body() -> Value {
    serde_json::json!({
        "origin": { "lat": 47.622, "lon": -122.3387 },
        "destination": { "lat": 47.624698, "lon": -122.3387 },
        "destination_name": "Westlake Ave N & Mercer St",
        "context": "I am taking the bus from this stop."
    })
}
