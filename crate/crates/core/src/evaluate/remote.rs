use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ScoreRequest, Scorer};
use crate::error::{Error, Result};
use crate::http::{post_with_retry, RetryPolicy, Transport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteLlmSpec {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
}

fn default_max_tokens() -> u32 {
    64
}

fn default_key_env() -> String {
    "EXSEL_LLM_API_KEY".into()
}

/// Chat-completion scorer: one request per validation item, temperature 0.
pub struct RemoteLlmScorer {
    spec: RemoteLlmSpec,
    api_key: Option<String>,
    transport: Arc<dyn Transport>,
    retries: AtomicUsize,
    requests: AtomicUsize,
}

impl RemoteLlmScorer {
    pub fn new(spec: RemoteLlmSpec, api_key: Option<String>, transport: Arc<dyn Transport>) -> Self {
        Self {
            spec,
            api_key,
            transport,
            retries: AtomicUsize::new(0),
            requests: AtomicUsize::new(0),
        }
    }

    /// Reads the key from the environment variable named by `api_key_env`.
    pub fn from_env(spec: RemoteLlmSpec, transport: Arc<dyn Transport>) -> Result<Self> {
        let key = std::env::var(&spec.api_key_env).map_err(|_| {
            Error::Config(format!("environment variable {} is not set", spec.api_key_env))
        })?;
        Ok(Self::new(spec, Some(key), transport))
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.spec.model,
            "temperature": 0,
            "max_tokens": self.spec.max_tokens,
            "messages": [{ "role": "user", "content": prompt }],
        })
    }

    pub fn retries(&self) -> usize {
        self.retries.load(Ordering::Relaxed)
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn complete(&self, prompt: &str) -> Result<String> {
        let body = self.request_body(prompt).to_string();
        self.requests.fetch_add(1, Ordering::Relaxed);
        let raw = post_with_retry(
            self.transport.as_ref(),
            &self.spec.endpoint,
            self.api_key.as_deref(),
            &body,
            self.spec.retry,
            &self.retries,
        )
        .map_err(|e| Error::Scorer(e.to_string()))?;
        let value: Value = serde_json::from_str(&raw)
            .map_err(|e| Error::Scorer(format!("unparseable completion: {e}")))?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Scorer("completion has no choices[0].message.content".into()))?;
        Ok(first_line(content).to_string())
    }
}

/// The reply up to its first newline, ignoring leading blank lines.
pub fn first_line(reply: &str) -> &str {
    reply
        .trim_start()
        .lines()
        .next()
        .unwrap_or("")
        .trim_end()
}

impl Scorer for RemoteLlmScorer {
    fn answer(&self, req: &ScoreRequest<'_>) -> Result<String> {
        self.complete(req.prompt)
    }

    fn describe(&self) -> String {
        format!("remote-llm:{}", self.spec.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::mock::ScriptedTransport;
    use std::time::Duration;

    fn spec() -> RemoteLlmSpec {
        RemoteLlmSpec {
            endpoint: "http://localhost/v1/chat/completions".into(),
            model: "m".into(),
            max_tokens: 16,
            retry: RetryPolicy {
                max_retries: 2,
                backoff_ms: 1,
            },
            api_key_env: "UNUSED".into(),
        }
    }

    const REPLY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"-462\nbecause"}}]}"#;

    #[test]
    fn request_carries_prompt_verbatim_at_temperature_zero() {
        let t = Arc::new(ScriptedTransport::new(vec![ScriptedTransport::ok(REPLY)]));
        let s = RemoteLlmScorer::new(spec(), Some("k".into()), t.clone());
        let prompt = "Input: 1\nOutput: 2\n\nInput: 117\nOutput:";
        assert_eq!(s.complete(prompt).unwrap(), "-462");
        let sent: Value = serde_json::from_str(&t.requests.lock().unwrap()[0]).unwrap();
        assert_eq!(sent["temperature"], json!(0));
        assert_eq!(sent["messages"][0]["role"], "user");
        assert_eq!(sent["messages"][0]["content"], prompt);
        assert_eq!(sent["model"], "m");
    }

    #[test]
    fn rate_limit_is_retried() {
        let t = Arc::new(ScriptedTransport::new(vec![
            ScriptedTransport::status(429, Some(Duration::from_millis(1))),
            ScriptedTransport::ok(REPLY),
        ]));
        let s = RemoteLlmScorer::new(spec(), None, t);
        assert_eq!(s.retries(), 0);
        assert_eq!(s.complete("p").unwrap(), "-462");
        assert_eq!(s.retries(), 1);
    }

    #[test]
    fn terminal_failure_is_scorer_error() {
        let t = Arc::new(ScriptedTransport::new(vec![
            ScriptedTransport::status(500, None),
            ScriptedTransport::status(500, None),
            ScriptedTransport::status(500, None),
        ]));
        let s = RemoteLlmScorer::new(spec(), None, t);
        assert!(matches!(s.complete("p"), Err(Error::Scorer(_))));
    }

    #[test]
    fn first_line_parsing() {
        assert_eq!(first_line("\n  Sports \nmore"), "Sports");
        assert_eq!(first_line(""), "");
    }
}
