//! HTTP adapters for live services.
//!
//! * routes: an OSRM-compatible `route/v1/foot` endpoint
//! * panoramas: a panorama gateway speaking the JSON contract in [`panorama`]
//! * places: an Overpass API endpoint
//! * model: an OpenAI-compatible `chat/completions` endpoint

pub mod model;
pub mod panorama;
pub mod places;
pub mod route;

use std::sync::Arc;
use std::time::Duration;

use reqwest::blocking::{Client, RequestBuilder, Response};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;

use super::retry::{RetryPolicy, TokenBucket};
use super::{ProviderError, ProviderResult};

pub use model::ChatCompletionsModel;
pub use panorama::PanoramaGateway;
pub use places::OverpassPlaces;
pub use route::OsrmRoutes;

/// Shared blocking HTTP client with retry and an optional shared rate limit.
#[derive(Clone)]
pub struct HttpClient {
    client: Client,
    retry: RetryPolicy,
    limiter: Option<Arc<TokenBucket>>,
}

impl HttpClient {
    pub fn new(timeout: Duration, retry: RetryPolicy) -> ProviderResult<Self> {
        let client = Client::builder()
            .timeout(timeout)
            .user_agent(concat!("scenescout/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| ProviderError::Http {
                status: None,
                message: format!("cannot build HTTP client: {e}"),
                retryable: false,
                attempts: 0,
            })?;
        Ok(Self {
            client,
            retry,
            limiter: None,
        })
    }

    pub fn with_limiter(mut self, limiter: Arc<TokenBucket>) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn client(&self) -> &Client {
        &self.client
    }

    /// Sends the request built by `build`, retrying per policy.
    pub fn send(
        &self,
        idempotent: bool,
        build: impl Fn(&Client) -> RequestBuilder,
    ) -> ProviderResult<Response> {
        self.retry.run(idempotent, &std::thread::sleep, || {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            let resp = build(&self.client).send().map_err(map_transport)?;
            check_status(resp)
        })
    }

    pub fn get_json<T: DeserializeOwned>(
        &self,
        build: impl Fn(&Client) -> RequestBuilder,
    ) -> ProviderResult<T> {
        let resp = self.send(true, build)?;
        resp.json()
            .map_err(|e| ProviderError::Decode(e.to_string()))
    }
}

fn map_transport(e: reqwest::Error) -> ProviderError {
    if e.is_timeout() {
        ProviderError::Timeout
    } else {
        ProviderError::Http {
            status: e.status().map(|s| s.as_u16()),
            message: e.to_string(),
            retryable: e.is_connect() || e.is_request(),
            attempts: 1,
        }
    }
}

fn check_status(resp: Response) -> ProviderResult<Response> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    if status == StatusCode::TOO_MANY_REQUESTS {
        let retry_after_ms = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .map(|secs| (secs * 1000.0) as u64)
            .unwrap_or(1_000);
        return Err(ProviderError::RateLimited { retry_after_ms });
    }
    let body = resp.text().unwrap_or_default();
    if status == StatusCode::NOT_FOUND {
        return Err(ProviderError::NotFound(truncate(&body, 200)));
    }
    Err(ProviderError::Http {
        status: Some(status.as_u16()),
        message: format!("HTTP {status}: {}", truncate(&body, 200)),
        retryable: status.is_server_error() || status == StatusCode::REQUEST_TIMEOUT,
        attempts: 1,
    })
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

pub(crate) fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}

#[cfg(test)]
pub(crate) mod test_server {
    //! One-shot canned HTTP responder for adapter tests.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;
    use std::thread;

    pub struct Canned {
        pub status: u16,
        pub content_type: &'static str,
        pub body: Vec<u8>,
        pub headers: Vec<(&'static str, String)>,
    }

    impl Canned {
        pub fn json(body: &str) -> Self {
            Self {
                status: 200,
                content_type: "application/json",
                body: body.as_bytes().to_vec(),
                headers: vec![],
            }
        }
    }

    /// Serves `responses` in order, one per connection; returns the base URL and
    /// a receiver yielding each raw request (head and body).
    pub fn serve(responses: Vec<Canned>) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for canned in responses {
                let (mut stream, _) = match listener.accept() {
                    Ok(s) => s,
                    Err(_) => return,
                };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut head = String::new();
                let mut content_length = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap_or(0);
                    }
                    head.push_str(&line);
                }
                let mut body = vec![0; content_length];
                reader.read_exact(&mut body).ok();
                head.push_str("\r\n");
                head.push_str(&String::from_utf8_lossy(&body));
                let _ = tx.send(head);
                let mut out = format!(
                    "HTTP/1.1 {} X\r\ncontent-type: {}\r\ncontent-length: {}\r\nconnection: close\r\n",
                    canned.status,
                    canned.content_type,
                    canned.body.len()
                );
                for (k, v) in &canned.headers {
                    out.push_str(&format!("{k}: {v}\r\n"));
                }
                out.push_str("\r\n");
                stream.write_all(out.as_bytes()).unwrap();
                stream.write_all(&canned.body).unwrap();
            }
        });
        (format!("http://{addr}"), rx)
    }
}
