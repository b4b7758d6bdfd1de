//! Minimal JSON-over-HTTP plumbing shared by the remote scorer and the remote
//! embedder: a swappable transport and a retry loop with exponential backoff.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub retry_after: Option<Duration>,
    pub body: String,
}

pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &str) -> Result<HttpResponse>;
}

/// Blocking reqwest-backed transport.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &str) -> Result<HttpResponse> {
        let mut req = self
            .client
            .post(url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string());
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|s| s.is_finite() && *s >= 0.0)
            .map(Duration::from_secs_f64);
        let body = resp.text().map_err(|e| Error::Transport(e.to_string()))?;
        Ok(HttpResponse {
            status,
            retry_after,
            body,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 5,
            backoff_ms: 500,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.min(16);
        Duration::from_millis(self.backoff_ms.saturating_mul(factor))
    }
}

fn retryable(status: u16) -> bool {
    status == 408 || status == 429 || (500..600).contains(&status)
}

/// POSTs `body` until a 2xx arrives or the retry budget is spent.
///
/// 429 responses wait for `Retry-After` when the server sends one. Every retry
/// bumps `retries`.
pub fn post_with_retry(
    transport: &dyn Transport,
    url: &str,
    bearer: Option<&str>,
    body: &str,
    policy: RetryPolicy,
    retries: &AtomicUsize,
) -> Result<String> {
    let mut attempt = 0u32;
    loop {
        let outcome = transport.post_json(url, bearer, body);
        let wait = match outcome {
            Ok(resp) if (200..300).contains(&resp.status) => return Ok(resp.body),
            Ok(resp) if retryable(resp.status) => {
                if attempt >= policy.max_retries {
                    return Err(Error::Transport(format!(
                        "HTTP {} after {} retries",
                        resp.status, attempt
                    )));
                }
                match (resp.status, resp.retry_after) {
                    (429, Some(after)) => after,
                    _ => policy.delay(attempt),
                }
            }
            Ok(resp) => {
                return Err(Error::Transport(format!(
                    "HTTP {}: {}",
                    resp.status,
                    truncate(&resp.body, 200)
                )))
            }
            Err(e) => {
                if attempt >= policy.max_retries {
                    return Err(e);
                }
                policy.delay(attempt)
            }
        };
        retries.fetch_add(1, Ordering::Relaxed);
        std::thread::sleep(wait);
        attempt += 1;
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}


#[cfg(test)]
mod tests {
    use super::mock::ScriptedTransport;
    use super::*;

    const FAST: RetryPolicy = RetryPolicy {
        max_retries: 3,
        backoff_ms: 1,
    };

    #[test]
    fn retries_on_rate_limit_then_succeeds() {
        let t = ScriptedTransport::new(vec![
            ScriptedTransport::status(429, Some(Duration::from_millis(1))),
            ScriptedTransport::ok("done"),
        ]);
        let retries = AtomicUsize::new(0);
        let body = post_with_retry(&t, "u", None, "{}", FAST, &retries).unwrap();
        assert_eq!(body, "done");
        assert_eq!(retries.load(Ordering::Relaxed), 1);
    }

    #[test]
    fn gives_up_after_budget() {
        let t = ScriptedTransport::new(
            (0..5)
                .map(|_| ScriptedTransport::status(503, None))
                .collect(),
        );
        let retries = AtomicUsize::new(0);
        let err = post_with_retry(&t, "u", None, "{}", FAST, &retries).unwrap_err();
        assert!(matches!(err, Error::Transport(_)));
        assert_eq!(retries.load(Ordering::Relaxed), 3);
        assert_eq!(t.requests.lock().unwrap().len(), 4);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let t = ScriptedTransport::new(vec![ScriptedTransport::status(400, None)]);
        let retries = AtomicUsize::new(0);
        assert!(post_with_retry(&t, "u", None, "{}", FAST, &retries).is_err());
        assert_eq!(retries.load(Ordering::Relaxed), 0);
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy {
            max_retries: 4,
            backoff_ms: 10,
        };
        assert_eq!(p.delay(0), Duration::from_millis(10));
        assert_eq!(p.delay(3), Duration::from_millis(80));
    }
}
