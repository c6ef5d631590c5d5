use std::sync::Arc;
use std::thread;
use std::time::Duration;

use log::warn;

use super::{SourceApi, SourcePage};
use crate::error::{Error, Result, SourceError};
use crate::ingest::RateLimiter;

pub const TOKEN_ENV: &str = "CLIPFORGE_API_TOKEN";

const MAX_MEDIA_BYTES: u64 = 4 << 30;

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubles for each later one.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(200),
        }
    }
}

/// HTTP client for `GET /videos` and `GET /media/<id>`.
pub struct HttpSource {
    base_url: String,
    token: Option<String>,
    agent: ureq::Agent,
    limiter: Arc<RateLimiter>,
    retry: RetryPolicy,
}

impl HttpSource {
    pub fn new(base_url: &str, token: Option<String>, limiter: Arc<RateLimiter>) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build();
        HttpSource {
            base_url: base_url.trim_end_matches('/').to_owned(),
            token,
            agent: ureq::Agent::new_with_config(config),
            limiter,
            retry: RetryPolicy::default(),
        }
    }

    /// Reads the bearer token from `CLIPFORGE_API_TOKEN`.
    pub fn from_env(base_url: &str, limiter: Arc<RateLimiter>) -> Self {
        let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Self::new(base_url, token, limiter)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn limiter(&self) -> &Arc<RateLimiter> {
        &self.limiter
    }

    fn get_once(&self, path: &str, query: &[(&str, &str)]) -> Result<Vec<u8>, SourceError> {
        let url = format!("{}{}", self.base_url, path);
        let mut req = self.agent.get(&url);
        for (k, v) in query {
            req = req.query(*k, *v);
        }
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let transport = |e: ureq::Error| SourceError::Transport {
            url: url.clone(),
            msg: e.to_string(),
        };
        let mut resp = req.call().map_err(transport)?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => resp
                .body_mut()
                .with_config()
                .limit(MAX_MEDIA_BYTES)
                .read_to_vec()
                .map_err(transport),
            401 | 403 => Err(SourceError::Auth { status }),
            _ => Err(SourceError::Status { status, url }),
        }
    }

    fn get(&self, path: &str, query: &[(&str, &str)]) -> Result<Vec<u8>> {
        let mut delay = self.retry.base_delay;
        let mut attempt = 1;
        loop {
            self.limiter.acquire(1)?;
            match self.get_once(path, query) {
                Ok(body) => return Ok(body),
                Err(e) if e.is_retryable() && attempt < self.retry.attempts => {
                    warn!("{e}; retrying in {delay:?} (attempt {attempt}/{})", self.retry.attempts);
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

impl SourceApi for HttpSource {
    fn list_page(&self, hashtag: &str, cursor: Option<&str>) -> Result<SourcePage> {
        let mut query = vec![("hashtag", hashtag)];
        if let Some(c) = cursor {
            query.push(("cursor", c));
        }
        let body = self.get("/videos", &query)?;
        serde_json::from_slice(&body).map_err(|e| {
            Error::Source(SourceError::Malformed {
                url: format!("{}/videos?hashtag={hashtag}", self.base_url),
                msg: e.to_string(),
            })
        })
    }

    fn fetch_media(&self, video_id: &str) -> Result<Vec<u8>> {
        self.get(&format!("/media/{video_id}"), &[])
    }
}
