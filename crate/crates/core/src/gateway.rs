//! Chat-completion client with retry, backoff and a per-endpoint pause
//! between successful calls.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::clock::Clock;
use crate::error::{Error, Result};

/// Wire format spoken by the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiShape {
    /// `POST {base_url}/chat/completions` with a messages array.
    #[default]
    Openai,
    /// `POST {base_url}/models/{model}:generateContent`.
    Gemini,
    /// `POST {base_url}` with `{model, system, user, image}`; the response
    /// body is the answer.
    Plain,
}

fn default_retries() -> u32 {
    3
}
fn default_initial_delay() -> f64 {
    5.0
}
fn default_pause() -> f64 {
    1.0
}
fn default_timeout() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the API key. `None` sends no key.
    #[serde(default)]
    pub api_key_env_var: Option<String>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Seconds.
    #[serde(default = "default_initial_delay")]
    pub initial_retry_delay: f64,
    /// Seconds.
    #[serde(default = "default_pause")]
    pub inter_call_pause: f64,
    /// Seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default)]
    pub api: ApiShape,
    /// Mirror every attempt to this JSONL file.
    #[serde(default)]
    pub audit_log: Option<PathBuf>,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env_var: None,
            max_retries: default_retries(),
            initial_retry_delay: default_initial_delay(),
            inter_call_pause: default_pause(),
            timeout: default_timeout(),
            api: ApiShape::default(),
            audit_log: None,
        }
    }

    /// Reads JSON, or TOML when the extension is `.toml`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::io::with_path(e, path))?;
        let cfg: EndpointConfig = if path.extension().is_some_and(|e| e == "toml") {
            crate::io::parse_toml(&text, path)?
        } else {
            crate::io::parse_json(&text, path)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(finite_nonneg(self.initial_retry_delay)
            && finite_nonneg(self.inter_call_pause)
            && self.timeout.is_finite()
            && self.timeout > 0.0)
        {
            return Err(Error::Config(
                "delays must be >= 0 and timeout > 0".to_string(),
            ));
        }
        if self.base_url.trim().is_empty() {
            return Err(Error::Config("base_url is empty".to_string()));
        }
        Ok(())
    }

    fn api_key(&self) -> Result<Option<String>> {
        match &self.api_key_env_var {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(v) if !v.is_empty() => Ok(Some(v)),
                _ => Err(Error::Config(format!(
                    "environment variable `{var}` with the API key is not set"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePayload {
    pub bytes: Vec<u8>,
    pub media_type: String,
}

impl ImagePayload {
    pub fn from_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| crate::io::with_path(e, path))?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        let media_type = match ext.as_str() {
            "png" => "image/png",
            "webp" => "image/webp",
            "gif" => "image/gif",
            _ => "image/jpeg",
        };
        Ok(Self {
            bytes,
            media_type: media_type.to_string(),
        })
    }

    pub fn base64(&self) -> String {
        base64::engine::general_purpose::STANDARD.encode(&self.bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CompletionRequest {
    pub system_text: Option<String>,
    pub user_text: String,
    pub image: Option<ImagePayload>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResponse {
    /// Untrimmed model text.
    pub raw_text: String,
    /// Seconds from first attempt to success, including backoff.
    pub latency: f64,
    pub attempt_count: u32,
}

/// Anything that turns a request into model text. The gateway is the real
/// one; tests plug in scripted stubs.
pub trait Responder: Send + Sync {
    fn respond(&self, req: &CompletionRequest) -> Result<CompletionResponse>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

pub trait Transport: Send + Sync {
    /// `Err` is a transport failure (connect, timeout) and is retried.
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        timeout: Duration,
    ) -> std::result::Result<HttpReply, String>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self { client })
    }
}

impl Transport for ReqwestTransport {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        timeout: Duration,
    ) -> std::result::Result<HttpReply, String> {
        let mut req = self.client.post(url).timeout(timeout).json(body);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

fn is_retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

pub struct Gateway {
    cfg: EndpointConfig,
    key: Option<String>,
    transport: Box<dyn Transport>,
    clock: Arc<dyn Clock>,
    /// Held for the whole call so one endpoint never sees concurrent
    /// requests. Stores when the last successful call finished.
    last_success: Mutex<Option<Duration>>,
    audit: Option<Mutex<File>>,
}

impl Gateway {
    /// Fails with a configuration error when the key variable is unset.
    pub fn new(
        cfg: EndpointConfig,
        transport: Box<dyn Transport>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        cfg.validate()?;
        let key = cfg.api_key()?;
        let audit = match &cfg.audit_log {
            Some(path) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| crate::io::with_path(e, path))?,
            )),
            None => None,
        };
        Ok(Self {
            cfg,
            key,
            transport,
            clock,
            last_success: Mutex::new(None),
            audit,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    fn endpoint(&self) -> (String, Vec<(String, String)>) {
        let base = self.cfg.base_url.trim_end_matches('/');
        let mut headers = Vec::new();
        let url = match self.cfg.api {
            ApiShape::Openai => {
                if let Some(k) = &self.key {
                    headers.push(("Authorization".to_string(), format!("Bearer {k}")));
                }
                format!("{base}/chat/completions")
            }
            ApiShape::Gemini => {
                if let Some(k) = &self.key {
                    headers.push(("x-goog-api-key".to_string(), k.clone()));
                }
                format!("{base}/models/{}:generateContent", self.cfg.model_name)
            }
            ApiShape::Plain => {
                if let Some(k) = &self.key {
                    headers.push(("Authorization".to_string(), format!("Bearer {k}")));
                }
                base.to_string()
            }
        };
        (url, headers)
    }

    pub fn request_body(&self, req: &CompletionRequest) -> Value {
        match self.cfg.api {
            ApiShape::Openai => {
                let mut messages = Vec::new();
                if let Some(s) = &req.system_text {
                    messages.push(json!({"role": "system", "content": s}));
                }
                let user = match &req.image {
                    None => json!(req.user_text),
                    Some(img) => json!([
                        {"type": "text", "text": req.user_text},
                        {"type": "image_url", "image_url": {
                            "url": format!("data:{};base64,{}", img.media_type, img.base64())
                        }}
                    ]),
                };
                messages.push(json!({"role": "user", "content": user}));
                json!({"model": self.cfg.model_name, "messages": messages})
            }
            ApiShape::Gemini => {
                let mut parts = vec![json!({"text": req.user_text})];
                if let Some(img) = &req.image {
                    parts.push(json!({"inline_data": {
                        "mime_type": img.media_type, "data": img.base64()
                    }}));
                }
                let mut body = json!({"contents": [{"role": "user", "parts": parts}]});
                if let Some(s) = &req.system_text {
                    body["systemInstruction"] = json!({"parts": [{"text": s}]});
                }
                body
            }
            ApiShape::Plain => json!({
                "model": self.cfg.model_name,
                "system": req.system_text,
                "user": req.user_text,
                "image": req.image.as_ref().map(|i| json!({
                    "media_type": i.media_type, "data": i.base64()
                })),
            }),
        }
    }

    /// Pulls the message text out of a successful response body.
    pub fn extract_text(&self, body: &str) -> Result<String> {
        let shape_err = |what: &str| Error::Delivery {
            attempts: 0,
            last: format!("response has no {what}"),
        };
        match self.cfg.api {
            ApiShape::Plain => Ok(body.to_string()),
            ApiShape::Openai => {
                let v: Value = serde_json::from_str(body)?;
                v.pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .ok_or_else(|| shape_err("choices[0].message.content"))
            }
            ApiShape::Gemini => {
                let v: Value = serde_json::from_str(body)?;
                let parts = v
                    .pointer("/candidates/0/content/parts")
                    .and_then(Value::as_array)
                    .ok_or_else(|| shape_err("candidates[0].content.parts"))?;
                Ok(parts
                    .iter()
                    .filter_map(|p| p.get("text").and_then(Value::as_str))
                    .collect())
            }
        }
    }

    fn audit(&self, attempt: u32, url: &str, body: &Value, outcome: &Value) {
        let Some(file) = &self.audit else { return };
        let line = json!({
            "timestamp": self.clock.wall().to_rfc3339(),
            "attempt": attempt,
            "url": url,
            "request": body,
            "response": outcome,
        });
        let mut f = file.lock().expect("audit log poisoned");
        if let Err(e) = writeln!(f, "{line}") {
            log::warn!("audit log write failed: {e}");
        }
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse> {
        let mut last_success = self.last_success.lock().expect("gateway poisoned");
        if let Some(done) = *last_success {
            let pause = Duration::from_secs_f64(self.cfg.inter_call_pause);
            let since = self.clock.now().saturating_sub(done);
            if since < pause {
                self.clock.sleep(pause - since);
            }
        }

        let (url, headers) = self.endpoint();
        let body = self.request_body(req);
        let timeout = Duration::from_secs_f64(self.cfg.timeout);
        let start = self.clock.now();
        let mut delay = self.cfg.initial_retry_delay;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let last = match self.transport.post(&url, &headers, &body, timeout) {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    self.audit(
                        attempt,
                        &url,
                        &body,
                        &json!({"status": reply.status, "body": reply.body}),
                    );
                    let raw_text = self.extract_text(&reply.body)?;
                    let now = self.clock.now();
                    *last_success = Some(now);
                    return Ok(CompletionResponse {
                        raw_text,
                        latency: (now - start).as_secs_f64(),
                        attempt_count: attempt,
                    });
                }
                Ok(reply) => {
                    self.audit(
                        attempt,
                        &url,
                        &body,
                        &json!({"status": reply.status, "body": reply.body}),
                    );
                    let last = format!("HTTP {}", reply.status);
                    if !is_retryable(reply.status) {
                        return Err(Error::Delivery {
                            attempts: attempt,
                            last,
                        });
                    }
                    last
                }
                Err(e) => {
                    self.audit(attempt, &url, &body, &json!({"error": e}));
                    format!("transport error: {e}")
                }
            };
            if attempt > self.cfg.max_retries {
                return Err(Error::Delivery {
                    attempts: attempt,
                    last,
                });
            }
            log::warn!("attempt {attempt} to {url} failed ({last}); retrying in {delay}s");
            self.clock.sleep(Duration::from_secs_f64(delay));
            delay *= 2.0;
        }
    }
}

impl Responder for Gateway {
    fn respond(&self, req: &CompletionRequest) -> Result<CompletionResponse> {
        self.complete(req)
    }
}
