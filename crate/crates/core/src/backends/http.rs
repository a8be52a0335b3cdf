//! Remote generation and detection over HTTP.

use std::env;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, GenerationRequest, ImageGenerator, ObjectDetector, Side, WireDetections};
use crate::suite::TestCase;

const MAX_IMAGE_BYTES: u64 = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerationApi {
    /// `{model, prompt, n, size, response_format}` → `{data: [{b64_json | url}]}`
    OpenAi,
    /// `{prompt, seed, size}` → `{image_b64 | url | images: [b64]}`
    Sd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpGeneratorConfig {
    pub name: String,
    pub api: GenerationApi,
    pub endpoint: String,
    /// Environment variable holding the bearer token.
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub size: Option<String>,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

fn default_timeout_s() -> u64 {
    120
}

fn agent(timeout_s: u64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(timeout_s)))
        .http_status_as_error(false)
        .build()
        .into()
}

fn transport(e: ureq::Error) -> BackendError {
    BackendError::Transient(e.to_string())
}

/// Maps a non-success status to an error class.
fn status_error(status: u16, body: &str) -> BackendError {
    let snippet: String = body.chars().take(300).collect();
    match status {
        401 | 403 => BackendError::Auth(format!("HTTP {status}: {snippet}")),
        429 => BackendError::RateLimited,
        408 | 500..=599 => BackendError::Transient(format!("HTTP {status}: {snippet}")),
        _ if is_policy_rejection(body) => BackendError::ContentPolicy(snippet),
        _ => BackendError::InvalidResponse(format!("HTTP {status}: {snippet}")),
    }
}

fn is_policy_rejection(body: &str) -> bool {
    let lower = body.to_lowercase();
    ["content_policy", "content policy", "safety system", "moderation_blocked"]
        .iter()
        .any(|m| lower.contains(m))
}

#[derive(Debug, Clone)]
pub struct HttpGenerator {
    config: HttpGeneratorConfig,
    token: Option<String>,
    agent: ureq::Agent,
}

impl HttpGenerator {
    /// Resolves the credential from the environment up front so that a
    /// missing variable fails before any case runs.
    pub fn new(config: HttpGeneratorConfig) -> Result<Self, BackendError> {
        let token = match &config.credential_env {
            Some(var) => Some(env::var(var).map_err(|_| BackendError::MissingCredential(var.clone()))?),
            None => None,
        };
        let agent = agent(config.timeout_s);
        Ok(HttpGenerator { config, token, agent })
    }

    fn body(&self, req: &GenerationRequest) -> Value {
        let prompt = req.transmitted_prompt();
        let mut body = match self.config.api {
            GenerationApi::OpenAi => json!({"prompt": prompt, "n": 1, "response_format": "b64_json"}),
            GenerationApi::Sd => json!({"prompt": prompt}),
        };
        let obj = body.as_object_mut().expect("object literal");
        if let Some(m) = &self.config.model {
            obj.insert("model".into(), m.clone().into());
        }
        if let Some(s) = &self.config.size {
            obj.insert("size".into(), s.clone().into());
        }
        if let (GenerationApi::Sd, Some(seed)) = (self.config.api, req.seed) {
            obj.insert("seed".into(), seed.into());
        }
        body
    }

    fn fetch(&self, url: &str) -> Result<Vec<u8>, BackendError> {
        let mut resp = self.agent.get(url).call().map_err(transport)?;
        let status = resp.status().as_u16();
        let bytes = resp
            .body_mut()
            .with_config()
            .limit(MAX_IMAGE_BYTES)
            .read_to_vec()
            .map_err(transport)?;
        if !(200..300).contains(&status) {
            return Err(status_error(status, &String::from_utf8_lossy(&bytes)));
        }
        Ok(bytes)
    }
}

fn decode_b64(s: &str) -> Result<Vec<u8>, BackendError> {
    base64::engine::general_purpose::STANDARD
        .decode(s.trim())
        .map_err(|e| BackendError::InvalidResponse(format!("base64 image: {e}")))
}

enum Payload<'a> {
    Inline(&'a str),
    Url(&'a str),
}

fn extract_payload(api: GenerationApi, v: &Value) -> Option<Payload<'_>> {
    let item = match api {
        GenerationApi::OpenAi => v.get("data")?.get(0)?,
        GenerationApi::Sd => v,
    };
    if let Some(s) = item.get("b64_json").or_else(|| item.get("image_b64")).and_then(Value::as_str) {
        return Some(Payload::Inline(s));
    }
    if let Some(s) = item.get("images").and_then(|i| i.get(0)).and_then(Value::as_str) {
        return Some(Payload::Inline(s));
    }
    item.get("url").and_then(Value::as_str).map(Payload::Url)
}

impl ImageGenerator for HttpGenerator {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn generate(&self, req: &GenerationRequest, _case: &TestCase, _side: Side) -> Result<Vec<u8>, BackendError> {
        let mut call = self.agent.post(&self.config.endpoint);
        if let Some(t) = &self.token {
            call = call.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = call.send_json(self.body(req)).map_err(transport)?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(MAX_IMAGE_BYTES * 2)
            .read_to_string()
            .map_err(transport)?;
        log::debug!("{} -> HTTP {status}, {} bytes", self.config.endpoint, text.len());
        if !(200..300).contains(&status) {
            return Err(status_error(status, &text));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
        match extract_payload(self.config.api, &v) {
            Some(Payload::Inline(s)) => decode_b64(s),
            Some(Payload::Url(u)) => self.fetch(u),
            None => Err(BackendError::InvalidResponse("response carries no image".into())),
        }
    }
}

/// Client for a detection service speaking the shared wire format.
#[derive(Debug, Clone)]
pub struct HttpDetector {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpDetector {
    pub fn new(endpoint: &str, timeout_s: u64) -> Self {
        HttpDetector {
            endpoint: endpoint.to_string(),
            agent: agent(timeout_s),
        }
    }
}

impl ObjectDetector for HttpDetector {
    fn name(&self) -> &str {
        &self.endpoint
    }

    fn detect(&self, image_bytes: &[u8]) -> Result<WireDetections, BackendError> {
        let content_type = match image::guess_format(image_bytes) {
            Ok(image::ImageFormat::Jpeg) => "image/jpeg",
            _ => "image/png",
        };
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", content_type)
            .send(image_bytes)
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| BackendError::InvalidResponse(e.to_string())),
            400 | 415 | 422 => Err(BackendError::UndecodableImage(text)),
            503 => Err(BackendError::Unavailable(text)),
            _ => Err(BackendError::InvalidResponse(format!("HTTP {status}: {text}"))),
        }
    }
}
