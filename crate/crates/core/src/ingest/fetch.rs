use std::path::PathBuf;
use std::time::Duration;

use super::{IngestError, RepoSource};
use crate::provider::{http_agent, map_ureq_error, retry_transient, ProviderError};

/// Timeout and retry policy for metadata downloads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FetchOptions {
    pub timeout_s: f64,
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions {
            timeout_s: 30.0,
            max_retries: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl FetchOptions {
    pub fn with_timeout(timeout_s: f64) -> Self {
        FetchOptions {
            timeout_s,
            ..Self::default()
        }
    }
}

/// Local file path for `file://` URLs and bare paths; `None` for http(s).
fn local_path(url: &str) -> Option<PathBuf> {
    if let Some(rest) = url.strip_prefix("file://") {
        return Some(PathBuf::from(rest));
    }
    if url.starts_with("http://") || url.starts_with("https://") {
        return None;
    }
    Some(PathBuf::from(url))
}

/// Downloads (or reads) the metadata document of `source`.
///
/// HTTP transport failures, timeouts, 429 and 5xx responses are retried with
/// exponential backoff; other non-2xx statuses fail immediately.
pub fn fetch_metadata(source: &RepoSource, options: &FetchOptions) -> Result<Vec<u8>, IngestError> {
    let url = source.metadata_url.trim();
    if url.is_empty() {
        return Err(IngestError::InvalidUrl("empty metadata_url".into()));
    }
    if let Some(path) = local_path(url) {
        if url.contains("://") && !url.starts_with("file://") {
            return Err(IngestError::InvalidUrl(url.to_string()));
        }
        return std::fs::read(&path).map_err(|e| IngestError::Io {
            path,
            message: e.to_string(),
        });
    }
    let agent = http_agent(options.timeout_s);
    let result = retry_transient(options.max_retries, options.base_delay, || {
        let mut resp = agent.get(url).call().map_err(map_ureq_error)?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(ProviderError::HttpStatus(status));
        }
        resp.body_mut()
            .with_config()
            .limit(256 * 1024 * 1024)
            .read_to_vec()
            .map_err(map_ureq_error)
    });
    result.map_err(|e| match e {
        ProviderError::HttpStatus(code) => IngestError::HttpStatus(code),
        ProviderError::Timeout => IngestError::Timeout,
        other => IngestError::Network(other.to_string()),
    })
}
