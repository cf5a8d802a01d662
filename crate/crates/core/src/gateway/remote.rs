//! HTTP backends speaking an OpenAI-compatible chat protocol and a simple
//! JSON matrix protocol for encoders. Credentials come from one environment
//! variable per provider.

use std::time::Duration;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{fit_rows, ChatBackend, ChatRequest, Decoding, EmbeddingMatrix, EncoderBackend, GatewayError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            base_delay_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpChatConfig {
    pub name: String,
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
    pub max_prompt_length: usize,
    pub decoding: Decoding,
    pub timeout_s: f64,
    pub retry: RetryPolicy,
}

enum Attempt<T> {
    Done(T),
    Retry(String),
    Fatal(String),
}

fn client(timeout_s: f64) -> Result<reqwest::blocking::Client, GatewayError> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs_f64(timeout_s))
        .build()
        .map_err(|e| GatewayError::BackendUnavailable {
            backend: "http".into(),
            reason: e.to_string(),
        })
}

fn post_with_retry<T>(
    backend: &str,
    client: &reqwest::blocking::Client,
    endpoint: &str,
    api_key_env: Option<&str>,
    body: &serde_json::Value,
    retry: RetryPolicy,
    parse: impl Fn(serde_json::Value) -> Option<T>,
) -> Result<T, GatewayError> {
    let token = api_key_env.and_then(|var| std::env::var(var).ok());
    let mut last = String::new();
    for attempt in 0..=retry.retries {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(retry.base_delay_ms << (attempt - 1)));
        }
        let mut req = client.post(endpoint).json(body);
        if let Some(t) = &token {
            req = req.bearer_auth(t);
        }
        let outcome = match req.send() {
            Err(e) => Attempt::Retry(e.to_string()),
            Ok(resp) => {
                let status = resp.status();
                if status.is_server_error() || status.as_u16() == 429 {
                    Attempt::Retry(format!("status {status}"))
                } else if !status.is_success() {
                    Attempt::Fatal(format!("status {status}"))
                } else {
                    match resp.json::<serde_json::Value>().ok().and_then(&parse) {
                        Some(v) => Attempt::Done(v),
                        None => Attempt::Fatal("unexpected response body".into()),
                    }
                }
            }
        };
        match outcome {
            Attempt::Done(v) => return Ok(v),
            Attempt::Retry(reason) => {
                log::warn!("{backend}: attempt {} failed: {reason}", attempt + 1);
                last = reason;
            }
            Attempt::Fatal(reason) => {
                return Err(GatewayError::BackendUnavailable {
                    backend: backend.to_string(),
                    reason,
                })
            }
        }
    }
    Err(GatewayError::BackendUnavailable {
        backend: backend.to_string(),
        reason: format!("gave up after {} retries: {last}", retry.retries),
    })
}

#[derive(Debug)]
pub struct HttpChat {
    config: HttpChatConfig,
    client: reqwest::blocking::Client,
}

impl HttpChat {
    pub fn new(config: HttpChatConfig) -> Result<Self, GatewayError> {
        let client = client(config.timeout_s)?;
        Ok(Self { config, client })
    }
}

impl ChatBackend for HttpChat {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn max_prompt_length(&self) -> usize {
        self.config.max_prompt_length
    }

    fn decoding(&self) -> Decoding {
        self.config.decoding
    }

    fn generate(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": self.config.decoding.temperature,
            "max_tokens": self.config.decoding.max_new_tokens,
            "seed": request.seed,
        });
        post_with_retry(
            &self.config.name,
            &self.client,
            &self.config.endpoint,
            self.config.api_key_env.as_deref(),
            &body,
            self.config.retry,
            |v| v["choices"][0]["message"]["content"].as_str().map(str::to_string),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpEncoderConfig {
    pub name: String,
    /// Endpoint accepting `{"model", "input"}` and answering
    /// `{"matrix": [[f64; dim]; tokens]}` whose first row is `<CLS>`.
    pub endpoint: String,
    pub model: String,
    pub api_key_env: Option<String>,
    pub dim: usize,
    pub max_len: usize,
    pub timeout_s: f64,
    pub retry: RetryPolicy,
}

#[derive(Debug)]
pub struct HttpEncoder {
    config: HttpEncoderConfig,
    client: reqwest::blocking::Client,
}

impl HttpEncoder {
    pub fn new(config: HttpEncoderConfig) -> Result<Self, GatewayError> {
        let client = client(config.timeout_s)?;
        Ok(Self { config, client })
    }
}

impl EncoderBackend for HttpEncoder {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn encode(&self, text: &str) -> Result<EmbeddingMatrix, GatewayError> {
        let dim = self.config.dim;
        let body = json!({"model": self.config.model, "input": text});
        let rows = post_with_retry(
            &self.config.name,
            &self.client,
            &self.config.endpoint,
            self.config.api_key_env.as_deref(),
            &body,
            self.config.retry,
            |v| {
                let rows: Vec<Vec<f64>> = serde_json::from_value(v["matrix"].clone()).ok()?;
                if rows.is_empty() || rows.iter().any(|r| r.len() != dim) {
                    return None;
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Array2::from_shape_vec((rows.len(), dim), flat).ok()
            },
        )?;
        Ok(fit_rows(rows, self.config.max_len))
    }
}
