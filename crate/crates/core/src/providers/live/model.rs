use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{join_url, HttpClient};
use crate::providers::*;

/// Multimodal model behind an OpenAI-compatible `chat/completions` endpoint.
/// Images travel inline as base64 data URLs.
pub struct ChatCompletionsModel {
    http: HttpClient,
    base_url: String,
    api_key: String,
    model: String,
    max_images: usize,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Debug, Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

impl ChatCompletionsModel {
    pub fn new(
        http: HttpClient,
        base_url: impl Into<String>,
        api_key: impl Into<String>,
        model: impl Into<String>,
    ) -> Self {
        Self {
            http,
            base_url: base_url.into(),
            api_key: api_key.into(),
            model: model.into(),
            max_images: 10,
        }
    }

    pub fn with_max_images(mut self, max_images: usize) -> Self {
        self.max_images = max_images;
        self
    }

    pub fn request_body(&self, req: &MllmRequest) -> Value {
        let mut content = vec![json!({"type": "text", "text": req.text})];
        let b64 = base64::engine::general_purpose::STANDARD;
        for img in &req.images {
            content.push(json!({
                "type": "image_url",
                "image_url": {
                    "url": format!("data:{};base64,{}", img.media_type, b64.encode(&img.bytes)),
                },
            }));
        }
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": content}],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        })
    }
}

impl LanguageModel for ChatCompletionsModel {
    fn complete(&self, req: &MllmRequest) -> ProviderResult<String> {
        req.validate(self.max_images)?;
        let url = join_url(&self.base_url, "chat/completions");
        let body = self.request_body(req);
        let resp = self
            .http
            .send(false, |c| c.post(&url).bearer_auth(&self.api_key).json(&body))?;
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| ProviderError::Decode(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Decode("response has no message content".to_string()))
    }
}
