//! Adapters for chat-completion and embedding endpoints speaking the common
//! `/chat/completions` and `/embeddings` JSON protocol.
//!
//! Configuration comes from the environment:
//! `EMPATHY_CHAT_BASE_URL`, `EMPATHY_CHAT_MODEL`, `EMPATHY_CHAT_API_KEY`,
//! `EMPATHY_EMBED_BASE_URL`, `EMPATHY_EMBED_MODEL`, `EMPATHY_EMBED_API_KEY`.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use crate::error::{Error, Result};

use super::{ChatProvider, ChatRequest, EmbeddingProvider, ProviderError};

fn env(name: &str) -> Result<String> {
    std::env::var(name).map_err(|_| Error::Validation(format!("environment variable {name} is not set")))
}

fn client() -> Result<Client> {
    Client::builder()
        .timeout(Duration::from_secs(120))
        .build()
        .map_err(|e| Error::Validation(format!("http client: {e}")))
}

/// Maps a status code to the retry class.
pub(crate) fn classify(status: StatusCode, body: &str) -> ProviderError {
    let msg = format!("{status}: {}", body.chars().take(300).collect::<String>());
    match status.as_u16() {
        401 | 402 | 403 => ProviderError::Fatal(msg),
        429 if body.contains("insufficient_quota") => ProviderError::Fatal(msg),
        408 | 409 | 429 => ProviderError::Transient(msg),
        s if s >= 500 => ProviderError::Transient(msg),
        _ => ProviderError::Invalid(msg),
    }
}

pub(crate) fn post_json(client: &Client, url: &str, key: Option<&str>, body: &Value) -> Result<Value, ProviderError> {
    let mut req = client.post(url).json(body);
    if let Some(k) = key {
        req = req.bearer_auth(k);
    }
    let resp = req.send().map_err(|e| ProviderError::Transient(e.to_string()))?;
    let status = resp.status();
    let text = resp.text().map_err(|e| ProviderError::Transient(e.to_string()))?;
    if !status.is_success() {
        return Err(classify(status, &text));
    }
    serde_json::from_str(&text).map_err(|e| ProviderError::Invalid(format!("bad json: {e}")))
}

pub struct HttpChat {
    client: Client,
    base_url: String,
    model: String,
    api_key: Option<String>,
}

impl HttpChat {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Result<Self> {
        Ok(HttpChat {
            client: client()?,
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            model: model.into(),
            api_key,
        })
    }

    /// Reads the base URL and key from the environment; `model` overrides
    /// `EMPATHY_CHAT_MODEL` when given.
    pub fn from_env(model: Option<&str>) -> Result<Self> {
        let model = match model {
            Some(m) => m.to_owned(),
            None => env("EMPATHY_CHAT_MODEL")?,
        };
        HttpChat::new(env("EMPATHY_CHAT_BASE_URL")?, model, std::env::var("EMPATHY_CHAT_API_KEY").ok())
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let mut messages = vec![json!({"role": "system", "content": request.system_text})];
        messages.extend(request.turns.iter().map(|t| json!({"role": "user", "content": t})));
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
    }
}

impl ChatProvider for HttpChat {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let url = format!("{}/chat/completions", self.base_url);
        let v = post_json(&self.client, &url, self.api_key.as_deref(), &self.body(request))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| ProviderError::Invalid("response has no choices[0].message.content".into()))
    }
}

pub struct HttpEmbedder {
    client: Client,
    base_url: String,
    model: String,
    api_key: Option<String>,
    id: String,
}

impl HttpEmbedder {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Result<Self> {
        let base_url = base_url.into().trim_end_matches('/').to_owned();
        let model = model.into();
        Ok(HttpEmbedder {
            client: client()?,
            id: format!("{base_url}#{model}"),
            base_url,
            model,
            api_key,
        })
    }

    pub fn from_env(model: Option<&str>) -> Result<Self> {
        let model = match model {
            Some(m) => m.to_owned(),
            None => env("EMPATHY_EMBED_MODEL")?,
        };
        HttpEmbedder::new(env("EMPATHY_EMBED_BASE_URL")?, model, std::env::var("EMPATHY_EMBED_API_KEY").ok())
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let url = format!("{}/embeddings", self.base_url);
        let body = json!({"model": self.model, "input": texts});
        let v = post_json(&self.client, &url, self.api_key.as_deref(), &body)?;
        let data = v["data"]
            .as_array()
            .ok_or_else(|| ProviderError::Invalid("response has no data array".into()))?;
        let mut out = vec![None; texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let idx = item["index"].as_u64().map_or(pos, |i| i as usize);
            let vec: Option<Vec<f64>> = item["embedding"]
                .as_array()
                .map(|a| a.iter().filter_map(Value::as_f64).collect());
            match (out.get_mut(idx), vec) {
                (Some(slot), Some(v)) => *slot = Some(v),
                _ => return Err(ProviderError::Invalid(format!("bad embedding entry {pos}"))),
            }
        }
        out.into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| ProviderError::Invalid("missing embeddings".into()))
    }
}
