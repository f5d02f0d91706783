//! Remote model providers (chat completion and embeddings) behind small traits,
//! with a blocking HTTP implementation and JSON-lines response caches.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// Credentials for every remote call. Never logged.
pub const API_KEY_ENV: &str = "FTB_API_KEY";
/// Base URL of an OpenAI-compatible API.
pub const ENDPOINT_ENV: &str = "FTB_ENDPOINT";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1";

const MAX_BODY_BYTES: u64 = 256 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("missing credentials: environment variable {0} is not set")]
    MissingCredentials(&'static str),
    #[error("network error: {0}")]
    Network(String),
    #[error("HTTP status {0}")]
    HttpStatus(u16),
    #[error("request timed out")]
    Timeout,
    #[error("unexpected provider response: {0}")]
    BadResponse(String),
    #[error("no cached response for {0} and no provider configured")]
    CacheMiss(String),
    #[error("cache file {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

impl ProviderError {
    /// Worth retrying with backoff.
    pub fn is_transient(&self) -> bool {
        match self {
            ProviderError::Network(_) | ProviderError::Timeout => true,
            ProviderError::HttpStatus(code) => *code == 429 || *code >= 500,
            _ => false,
        }
    }
}

/// Connection settings for a chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_s: f64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint: format!("{DEFAULT_ENDPOINT}/chat/completions"),
            model: "gpt-4".to_string(),
            temperature: 0.0,
            max_retries: 2,
            timeout_s: 60.0,
        }
    }
}

pub fn api_key_from_env() -> Result<String, ProviderError> {
    match std::env::var(API_KEY_ENV) {
        Ok(key) if !key.trim().is_empty() => Ok(key),
        _ => Err(ProviderError::MissingCredentials(API_KEY_ENV)),
    }
}

/// Base URL from `FTB_ENDPOINT`, falling back to the public OpenAI API.
pub fn endpoint_base_from_env() -> String {
    std::env::var(ENDPOINT_ENV)
        .ok()
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim_end_matches('/').to_string())
        .unwrap_or_else(|| DEFAULT_ENDPOINT.to_string())
}

/// Single-turn text completion.
pub trait ChatProvider: Send + Sync {
    fn model(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, ProviderError>;
}

/// Batch text embedding; one vector per input, in input order.
pub trait EmbeddingProvider: Send + Sync {
    fn model(&self) -> &str;
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

pub(crate) fn http_agent(timeout_s: f64) -> ureq::Agent {
    let timeout = Duration::from_secs_f64(timeout_s.max(0.001));
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

pub(crate) fn map_ureq_error(err: ureq::Error) -> ProviderError {
    match err {
        ureq::Error::Timeout(_) => ProviderError::Timeout,
        ureq::Error::StatusCode(code) => ProviderError::HttpStatus(code),
        ureq::Error::Io(io)
            if matches!(
                io.kind(),
                std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock
            ) =>
        {
            ProviderError::Timeout
        }
        other => ProviderError::Network(other.to_string()),
    }
}

/// Runs `op` until it succeeds, fails permanently, or `max_retries` retries
/// are spent. Delay doubles from `base_delay` after each transient failure.
pub(crate) fn retry_transient<T>(
    max_retries: u32,
    base_delay: Duration,
    mut op: impl FnMut() -> Result<T, ProviderError>,
) -> Result<T, ProviderError> {
    let mut attempt = 0;
    loop {
        match op() {
            Err(e) if e.is_transient() && attempt < max_retries => {
                let delay = base_delay * 2u32.saturating_pow(attempt);
                log::debug!("transient provider failure ({e}), retrying in {delay:?}");
                thread::sleep(delay);
                attempt += 1;
            }
            other => return other,
        }
    }
}

fn post_json(
    agent: &ureq::Agent,
    url: &str,
    api_key: &str,
    body: &Value,
) -> Result<Value, ProviderError> {
    let mut resp = agent
        .post(url)
        .header("Authorization", &format!("Bearer {api_key}"))
        .send_json(body)
        .map_err(map_ureq_error)?;
    let status = resp.status().as_u16();
    if !(200..300).contains(&status) {
        return Err(ProviderError::HttpStatus(status));
    }
    let bytes = resp
        .body_mut()
        .with_config()
        .limit(MAX_BODY_BYTES)
        .read_to_vec()
        .map_err(map_ureq_error)?;
    serde_json::from_slice(&bytes).map_err(|e| ProviderError::BadResponse(e.to_string()))
}

/// OpenAI-compatible chat-completions client.
pub struct HttpChatProvider {
    config: ProviderConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpChatProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChatProvider")
            .field("config", &self.config)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl HttpChatProvider {
    pub fn new(config: ProviderConfig, api_key: String) -> Self {
        let agent = http_agent(config.timeout_s);
        HttpChatProvider {
            config,
            api_key,
            agent,
        }
    }

    pub fn from_env(config: ProviderConfig) -> Result<Self, ProviderError> {
        Ok(Self::new(config, api_key_from_env()?))
    }
}

impl ChatProvider for HttpChatProvider {
    fn model(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let value = retry_transient(self.config.max_retries, Duration::from_millis(250), || {
            post_json(&self.agent, &self.config.endpoint, &self.api_key, &body)
        })?;
        extract_completion(&value)
    }
}

/// Pulls the completion text out of the common response shapes.
pub fn extract_completion(value: &Value) -> Result<String, ProviderError> {
    let candidates = [
        value.pointer("/choices/0/message/content"),
        value.pointer("/choices/0/text"),
        value.get("response"),
        value.get("content"),
        value.get("text"),
    ];
    candidates
        .into_iter()
        .flatten()
        .find_map(|v| v.as_str().map(str::to_string))
        .ok_or_else(|| ProviderError::BadResponse("no completion text field".into()))
}

/// OpenAI-compatible embeddings client.
pub struct HttpEmbeddingProvider {
    endpoint: String,
    model: String,
    api_key: String,
    max_retries: u32,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpEmbeddingProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpEmbeddingProvider")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl HttpEmbeddingProvider {
    pub fn new(endpoint: String, model: String, api_key: String, timeout_s: f64) -> Self {
        HttpEmbeddingProvider {
            endpoint,
            model,
            api_key,
            max_retries: 2,
            agent: http_agent(timeout_s),
        }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn model(&self) -> &str {
        &self.model
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let body = json!({"model": self.model, "input": texts});
        let value = retry_transient(self.max_retries, Duration::from_millis(250), || {
            post_json(&self.agent, &self.endpoint, &self.api_key, &body)
        })?;
        extract_embeddings(&value)
    }
}

/// Accepts a bare array of vectors, `{"embeddings": [...]}`, or the
/// `{"data": [{"index", "embedding"}]}` shape.
pub fn extract_embeddings(value: &Value) -> Result<Vec<Vec<f64>>, ProviderError> {
    fn as_matrix(v: &Value) -> Option<Vec<Vec<f64>>> {
        v.as_array()?
            .iter()
            .map(|row| row.as_array()?.iter().map(Value::as_f64).collect())
            .collect()
    }
    if let Some(m) = as_matrix(value) {
        return Ok(m);
    }
    if let Some(m) = value.get("embeddings").and_then(as_matrix) {
        return Ok(m);
    }
    if let Some(data) = value.get("data").and_then(Value::as_array) {
        let mut rows: Vec<(u64, Vec<f64>)> = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).unwrap_or(pos as u64);
            let emb = item
                .get("embedding")
                .and_then(Value::as_array)
                .and_then(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
                .ok_or_else(|| ProviderError::BadResponse("embedding is not a float array".into()))?;
            rows.push((index, emb));
        }
        rows.sort_by_key(|(i, _)| *i);
        return Ok(rows.into_iter().map(|(_, v)| v).collect());
    }
    Err(ProviderError::BadResponse("no embedding array in response".into()))
}

/// Append-only JSON-lines store. Records are loaded once at open.
#[derive(Debug)]
pub struct JsonlStore<R> {
    path: PathBuf,
    records: Mutex<Vec<R>>,
}

impl<R: Serialize + DeserializeOwned + Clone> JsonlStore<R> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref().to_path_buf();
        let cache_err = |e: &dyn std::fmt::Display| ProviderError::Cache {
            path: path.clone(),
            message: e.to_string(),
        };
        let mut records = Vec::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| cache_err(&e))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| cache_err(&e))?;
                if line.trim().is_empty() {
                    continue;
                }
                records.push(serde_json::from_str(&line).map_err(|e| cache_err(&e))?);
            }
        }
        Ok(JsonlStore {
            path,
            records: Mutex::new(records),
        })
    }

    pub fn find(&self, pred: impl Fn(&R) -> bool) -> Option<R> {
        self.records.lock().unwrap().iter().find(|r| pred(r)).cloned()
    }

    pub fn append(&self, record: R) -> Result<(), ProviderError> {
        let cache_err = |e: &dyn std::fmt::Display| ProviderError::Cache {
            path: self.path.clone(),
            message: e.to_string(),
        };
        let mut records = self.records.lock().unwrap();
        if let Some(parent) = self.path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| cache_err(&e))?;
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| cache_err(&e))?;
        let line = serde_json::to_string(&record).map_err(|e| cache_err(&e))?;
        writeln!(file, "{line}").map_err(|e| cache_err(&e))?;
        records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn transient_classification() {
        assert!(ProviderError::Timeout.is_transient());
        assert!(ProviderError::HttpStatus(503).is_transient());
        assert!(ProviderError::HttpStatus(429).is_transient());
        assert!(!ProviderError::HttpStatus(404).is_transient());
        assert!(!ProviderError::BadResponse("x".into()).is_transient());
    }

    #[test]
    fn retry_stops_on_permanent_error() {
        let calls = Cell::new(0);
        let out: Result<(), _> = retry_transient(5, Duration::ZERO, || {
            calls.set(calls.get() + 1);
            Err(ProviderError::HttpStatus(404))
        });
        assert_eq!(out, Err(ProviderError::HttpStatus(404)));
        assert_eq!(calls.get(), 1);
    }

    #[test]
    fn retry_gives_up_after_budget() {
        let calls = Cell::new(0);
        let out: Result<(), _> = retry_transient(2, Duration::ZERO, || {
            calls.set(calls.get() + 1);
            Err(ProviderError::Timeout)
        });
        assert_eq!(out, Err(ProviderError::Timeout));
        assert_eq!(calls.get(), 3);
    }

    #[test]
    fn completion_shapes() {
        let openai = json!({"choices": [{"message": {"content": "A: b"}}]});
        assert_eq!(extract_completion(&openai).unwrap(), "A: b");
        assert_eq!(extract_completion(&json!({"response": "x"})).unwrap(), "x");
        assert!(extract_completion(&json!({"foo": 1})).is_err());
    }

    #[test]
    fn embedding_shapes() {
        let bare = json!([[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(extract_embeddings(&bare).unwrap()[1], vec![3.0, 4.0]);
        let data = json!({"data": [
            {"index": 1, "embedding": [0.0, 1.0]},
            {"index": 0, "embedding": [1.0, 0.0]}
        ]});
        assert_eq!(extract_embeddings(&data).unwrap()[0], vec![1.0, 0.0]);
        assert!(extract_embeddings(&json!({"data": [{"embedding": "no"}]})).is_err());
    }

    #[test]
    fn jsonl_store_persists() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/cache.jsonl");
        let store: JsonlStore<Value> = JsonlStore::open(&path).unwrap();
        assert!(store.is_empty());
        store.append(json!({"k": 1})).unwrap();
        store.append(json!({"k": 2})).unwrap();
        let reopened: JsonlStore<Value> = JsonlStore::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
        assert_eq!(reopened.find(|r| r["k"] == 2), Some(json!({"k": 2})));
    }

    #[test]
    fn debug_redacts_key() {
        let p = HttpChatProvider::new(ProviderConfig::default(), "sk-secret".into());
        assert!(!format!("{p:?}").contains("sk-secret"));
    }
}
