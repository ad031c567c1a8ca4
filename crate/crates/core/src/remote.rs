//! Blocking JSON-over-HTTP with bounded retries and exponential backoff,
//! shared by the chat-completions client and the remote scorer.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RemoteError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("environment variable {0} holding the API token is not set")]
    MissingToken(String),
}

impl RemoteError {
    fn retryable(&self) -> bool {
        match self {
            RemoteError::Status { status, .. } => *status == 429 || *status >= 500,
            RemoteError::Timeout { .. } | RemoteError::Transport(_) => true,
            RemoteError::Malformed(_) | RemoteError::MissingToken(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub timeout_secs: f64,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub backoff_ms: u64,
    /// Bound on in-flight requests per client.
    pub parallelism: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 500,
            parallelism: 4,
        }
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().unwrap();
        while *p == 0 {
            p = self.cv.wait(p).unwrap();
        }
        *p -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpClient {
    config: HttpConfig,
    http: reqwest::blocking::Client,
    limiter: Semaphore,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient").field("config", &self.config).finish()
    }
}

const BODY_EXCERPT: usize = 512;

fn excerpt(body: &str) -> String {
    let mut s: String = body.chars().take(BODY_EXCERPT).collect();
    if body.chars().count() > BODY_EXCERPT {
        s.push_str("...");
    }
    s
}

impl HttpClient {
    pub fn new(config: HttpConfig) -> Self {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs.max(0.001)))
            .build()
            .expect("http client builds");
        Self {
            limiter: Semaphore::new(config.parallelism),
            config,
            http,
        }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    /// POSTs `body` and returns the parsed JSON response. Retries on
    /// transport errors, timeouts, 429 and 5xx.
    pub fn post_json(
        &self,
        url: &str,
        body: &serde_json::Value,
        bearer: Option<&str>,
    ) -> Result<serde_json::Value, RemoteError> {
        let _permit = self.limiter.acquire();
        let attempts = self.config.max_retries + 1;
        let mut last = RemoteError::Transport("no attempt made".into());
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.post_once(url, body, bearer, attempt + 1) {
                Ok(v) => return Ok(v),
                Err(e) if e.retryable() => {
                    log::warn!("request to {url} failed (attempt {}/{attempts}): {e}", attempt + 1);
                    last = e;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }

    fn post_once(
        &self,
        url: &str,
        body: &serde_json::Value,
        bearer: Option<&str>,
        attempt: u32,
    ) -> Result<serde_json::Value, RemoteError> {
        let mut req = self.http.post(url).json(body);
        if let Some(token) = bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                RemoteError::Timeout { attempts: attempt }
            } else {
                RemoteError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                RemoteError::Timeout { attempts: attempt }
            } else {
                RemoteError::Transport(e.to_string())
            }
        })?;
        if !status.is_success() {
            return Err(RemoteError::Status {
                status: status.as_u16(),
                body: excerpt(&text),
            });
        }
        serde_json::from_str(&text).map_err(|e| {
            RemoteError::Malformed(format!("{e} in body `{}`", excerpt(&text)))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::StubServer;

    fn fast(retries: u32) -> HttpClient {
        HttpClient::new(HttpConfig {
            timeout_secs: 5.0,
            max_retries: retries,
            backoff_ms: 1,
            parallelism: 2,
        })
    }

    #[test]
    fn retries_then_succeeds() {
        let server = StubServer::start(vec![
            (500, "oops".into()),
            (200, r#"{"ok": true}"#.into()),
        ]);
        let v = fast(2).post_json(&server.url("/x"), &serde_json::json!({}), None).unwrap();
        assert_eq!(v["ok"], true);
        assert_eq!(server.requests().len(), 2);
    }

    #[test]
    fn gives_up_after_retry_limit() {
        let server = StubServer::start(vec![(500, "boom".into())]);
        let err = fast(2).post_json(&server.url("/x"), &serde_json::json!({}), None).unwrap_err();
        assert_eq!(err, RemoteError::Status { status: 500, body: "boom".into() });
        assert_eq!(server.requests().len(), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let server = StubServer::start(vec![(400, "bad".into())]);
        let err = fast(5).post_json(&server.url("/x"), &serde_json::json!({}), None).unwrap_err();
        assert!(matches!(err, RemoteError::Status { status: 400, .. }));
        assert_eq!(server.requests().len(), 1);
    }

    #[test]
    fn malformed_json_is_reported() {
        let server = StubServer::start(vec![(200, "{not json".into())]);
        let err = fast(0).post_json(&server.url("/x"), &serde_json::json!({}), None).unwrap_err();
        assert!(matches!(err, RemoteError::Malformed(_)), "{err:?}");
    }

    #[test]
    fn unreachable_host_is_transport_error() {
        let url = {
            let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
            format!("http://{}/", l.local_addr().unwrap())
        };
        let err = fast(0).post_json(&url, &serde_json::json!({}), None).unwrap_err();
        assert!(matches!(err, RemoteError::Transport(_)), "{err:?}");
    }
}
