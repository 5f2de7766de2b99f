//! Client for the frozen Inspector VLM.
//!
//! The Inspector answers one question about one image per request. Backends
//! implement [`InspectorBackend`]; [`Inspector`] adds validation, retries and
//! a concurrency bound on top. [`MockBackend`] is a deterministic rule table
//! for offline runs.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image_io::{self, ImageError};
use crate::limiter::{bounded_map, Limiter};
use crate::model::QASet;

pub const DEFAULT_PROMPT_TEMPLATE: &str =
    "{question}\nAnswer tersely: reply with yes/no, a single number, or a short phrase.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InspectorConfig {
    pub endpoint: String,
    pub model_id: String,
    pub max_concurrency: usize,
    pub timeout_secs: f64,
    pub retries: u32,
    /// Wraps every question; `{question}` is substituted.
    pub prompt_template: String,
}

impl Default for InspectorConfig {
    fn default() -> Self {
        InspectorConfig {
            endpoint: "http://127.0.0.1:8000/v1".to_string(),
            model_id: "Qwen/Qwen3-VL-30B-A3B-Instruct".to_string(),
            max_concurrency: 8,
            timeout_secs: 60.0,
            retries: 2,
            prompt_template: DEFAULT_PROMPT_TEMPLATE.to_string(),
        }
    }
}

impl InspectorConfig {
    pub fn validate(&self) -> Result<(), InspectorError> {
        if self.max_concurrency < 1 {
            return Err(InspectorError::InvalidConfig(
                "max_concurrency must be >= 1".into(),
            ));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(InspectorError::InvalidConfig("timeout must be > 0".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn render_prompt(&self, question: &str) -> String {
        self.prompt_template.replace("{question}", question)
    }
}

#[derive(Debug, Error)]
pub enum InspectorError {
    #[error("invalid inspector config: {0}")]
    InvalidConfig(String),
    #[error("image does not decode: {0}")]
    InvalidImage(#[from] ImageError),
    #[error("question is empty")]
    EmptyQuestion,
    #[error("qa set is empty")]
    EmptyQaSet,
    #[error("inspector unavailable{} after {attempts} attempt(s): {reason}", .index.map(|i| format!(" at item {i}")).unwrap_or_default())]
    Unavailable {
        index: Option<usize>,
        attempts: u32,
        reason: String,
    },
}

/// Transport-level failure (connection refused, timeout, 5xx). A model that
/// declines to answer is a reply, not a transport error.
#[derive(Debug, Clone, Error)]
#[error("{0}")]
pub struct TransportError(pub String);

pub struct InspectorRequest<'a> {
    pub image_png: &'a [u8],
    pub question: &'a str,
    pub prompt: &'a str,
}

pub trait InspectorBackend: Send + Sync {
    fn query(&self, request: &InspectorRequest<'_>) -> Result<String, TransportError>;
}

pub struct Inspector {
    backend: Arc<dyn InspectorBackend>,
    config: InspectorConfig,
    limiter: Limiter,
}

impl Inspector {
    pub fn new(
        backend: Arc<dyn InspectorBackend>,
        config: InspectorConfig,
    ) -> Result<Self, InspectorError> {
        config.validate()?;
        Ok(Inspector {
            limiter: Limiter::new(config.max_concurrency),
            backend,
            config,
        })
    }

    pub fn config(&self) -> &InspectorConfig {
        &self.config
    }

    /// Highest number of concurrent backend requests observed so far.
    pub fn peak_in_flight(&self) -> usize {
        self.limiter.peak()
    }

    /// Poses one question about one image and returns the reply verbatim.
    pub fn ask(&self, image: &[u8], question: &str) -> Result<String, InspectorError> {
        image_io::decode(image)?;
        self.ask_decoded(image, question)
    }

    fn ask_decoded(&self, image: &[u8], question: &str) -> Result<String, InspectorError> {
        if question.trim().is_empty() {
            return Err(InspectorError::EmptyQuestion);
        }
        let prompt = self.config.render_prompt(question);
        let request = InspectorRequest {
            image_png: image,
            question,
            prompt: &prompt,
        };
        let mut attempts = 0;
        loop {
            attempts += 1;
            let result = {
                let _permit = self.limiter.acquire();
                self.backend.query(&request)
            };
            match result {
                Ok(reply) => return Ok(reply),
                Err(e) if attempts > self.config.retries => {
                    return Err(InspectorError::Unavailable {
                        index: None,
                        attempts,
                        reason: e.0,
                    })
                }
                Err(_) => continue,
            }
        }
    }

    /// One reply per QA item, in item order.
    pub fn answer_qa_set(&self, image: &[u8], qa: &QASet) -> Result<Vec<String>, InspectorError> {
        if qa.items.is_empty() {
            return Err(InspectorError::EmptyQaSet);
        }
        image_io::decode(image)?;
        let replies = bounded_map(&qa.items, self.config.max_concurrency, |i, item| {
            self.ask_decoded(image, &item.question)
                .map_err(|e| match e {
                    InspectorError::Unavailable {
                        attempts, reason, ..
                    } => InspectorError::Unavailable {
                        index: Some(i),
                        attempts,
                        reason,
                    },
                    other => other,
                })
        });
        replies.into_iter().collect()
    }
}

/// One deterministic mock reply. `image_fingerprint` is the SHA-256 hex of
/// the PNG bytes, or `*` for any image; `question_pattern` is a substring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub image_fingerprint: String,
    pub question_pattern: String,
    pub reply: String,
}

/// Injected transport failure for questions containing `question_pattern`.
/// `times = None` fails forever; `Some(n)` fails the first n attempts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockFailure {
    pub question_pattern: String,
    #[serde(default)]
    pub times: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockRules {
    pub rules: Vec<MockRule>,
    pub default_reply: Option<String>,
    pub failures: Vec<MockFailure>,
    /// Every request fails with a transport error.
    pub offline: bool,
    pub latency_ms: u64,
}

pub const MOCK_FALLBACK_REPLY: &str = "I cannot determine that from the image.";

#[derive(Default)]
pub struct MockBackend {
    rules: MockRules,
    attempts: Mutex<HashMap<String, u32>>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(rules: MockRules) -> Self {
        MockBackend {
            rules,
            ..Default::default()
        }
    }

    pub fn from_rules(rules: Vec<MockRule>) -> Self {
        Self::new(MockRules {
            rules,
            ..Default::default()
        })
    }

    pub fn load(path: &Path) -> Result<Self, InspectorError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| InspectorError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let rules: MockRules = serde_json::from_str(&text)
            .map_err(|e| InspectorError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Ok(Self::new(rules))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Highest number of simultaneous `query` calls observed.
    pub fn peak_concurrency(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    fn reply_for(&self, fingerprint: &str, question: &str) -> String {
        self.rules
            .rules
            .iter()
            .find(|r| {
                (r.image_fingerprint == "*"
                    || r.image_fingerprint.eq_ignore_ascii_case(fingerprint))
                    && question.contains(&r.question_pattern)
            })
            .map(|r| r.reply.clone())
            .or_else(|| self.rules.default_reply.clone())
            .unwrap_or_else(|| MOCK_FALLBACK_REPLY.to_string())
    }

    fn injected_failure(&self, question: &str) -> Option<TransportError> {
        if self.rules.offline {
            return Some(TransportError("connection refused (mock offline)".into()));
        }
        let failure = self
            .rules
            .failures
            .iter()
            .find(|f| question.contains(&f.question_pattern))?;
        let mut attempts = self.attempts.lock().unwrap();
        let seen = attempts.entry(question.to_string()).or_insert(0);
        *seen += 1;
        match failure.times {
            None => Some(TransportError("injected permanent failure".into())),
            Some(n) if *seen <= n => Some(TransportError("injected transient failure".into())),
            Some(_) => None,
        }
    }
}

impl InspectorBackend for MockBackend {
    fn query(&self, request: &InspectorRequest<'_>) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if self.rules.latency_ms > 0 {
            std::thread::sleep(Duration::from_millis(self.rules.latency_ms));
        }
        let result = match self.injected_failure(request.question) {
            Some(e) => Err(e),
            None => Ok(self.reply_for(&image_io::sha256_hex(request.image_png), request.question)),
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}

impl<T: InspectorBackend + ?Sized> InspectorBackend for Arc<T> {
    fn query(&self, request: &InspectorRequest<'_>) -> Result<String, TransportError> {
        (**self).query(request)
    }
}

#[cfg(feature = "remote")]
pub use http::HttpBackend;

#[cfg(feature = "remote")]
mod http {
    use base64::Engine;
    use serde_json::{json, Value};

    use super::*;

    pub const API_KEY_ENV: &str = "CHART_REWARD_INSPECTOR_API_KEY";

    /// Chat-completions style HTTP backend: one POST per question with the
    /// image attached as a base64 data URL.
    pub struct HttpBackend {
        agent: ureq::Agent,
        url: String,
        model_id: String,
        api_key: Option<String>,
    }

    impl HttpBackend {
        pub fn new(config: &InspectorConfig) -> Self {
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(config.timeout()))
                .http_status_as_error(true)
                .build()
                .into();
            HttpBackend {
                agent,
                url: format!("{}/chat/completions", config.endpoint.trim_end_matches('/')),
                model_id: config.model_id.clone(),
                api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            }
        }

        pub fn request_body(&self, request: &InspectorRequest<'_>) -> Value {
            let b64 = base64::engine::general_purpose::STANDARD.encode(request.image_png);
            json!({
                "model": self.model_id,
                "temperature": 0,
                "messages": [{
                    "role": "user",
                    "content": [
                        {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}},
                        {"type": "text", "text": request.prompt},
                    ],
                }],
            })
        }
    }

    pub(crate) fn reply_text(body: &Value) -> Option<String> {
        let content = body.pointer("/choices/0/message/content")?;
        match content {
            Value::String(s) => Some(s.clone()),
            Value::Array(parts) => Some(
                parts
                    .iter()
                    .filter_map(|p| p.get("text").and_then(Value::as_str))
                    .collect::<Vec<_>>()
                    .join(""),
            ),
            Value::Null => Some(String::new()),
            _ => None,
        }
    }

    impl InspectorBackend for HttpBackend {
        fn query(&self, request: &InspectorRequest<'_>) -> Result<String, TransportError> {
            let mut req = self.agent.post(&self.url);
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            let mut resp = req
                .send_json(self.request_body(request))
                .map_err(|e| TransportError(e.to_string()))?;
            let body: Value = resp
                .body_mut()
                .read_json()
                .map_err(|e| TransportError(format!("bad response body: {e}")))?;
            reply_text(&body)
                .ok_or_else(|| TransportError("response has no choices[0].message.content".into()))
        }
    }
}
