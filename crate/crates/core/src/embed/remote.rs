use std::sync::atomic::AtomicUsize;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::http::{post_with_retry, RetryPolicy, Transport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEmbedSpec {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
}

fn default_batch() -> usize {
    64
}

fn default_key_env() -> String {
    "EXSEL_EMBED_API_KEY".into()
}

/// `POST {"input": [...], "model": m}` → `{"data": [{"embedding": [...]}, ...]}`.
pub struct RemoteEmbedder {
    spec: RemoteEmbedSpec,
    api_key: Option<String>,
    transport: Arc<dyn Transport>,
    retries: AtomicUsize,
}

impl RemoteEmbedder {
    pub fn new(spec: RemoteEmbedSpec, api_key: Option<String>, transport: Arc<dyn Transport>) -> Self {
        Self {
            spec,
            api_key,
            transport,
            retries: AtomicUsize::new(0),
        }
    }

    pub fn from_env(spec: RemoteEmbedSpec, transport: Arc<dyn Transport>) -> Self {
        let key = std::env::var(&spec.api_key_env).ok();
        Self::new(spec, key, transport)
    }

    pub fn batch_size(&self) -> usize {
        self.spec.batch_size.max(1)
    }

    fn parse(raw: &str, expected: usize) -> Result<Vec<Vec<f64>>> {
        let value: Value =
            serde_json::from_str(raw).map_err(|e| Error::Transport(format!("bad embedding reply: {e}")))?;
        let data = value
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Transport("embedding reply has no `data` array".into()))?;
        if data.len() != expected {
            return Err(Error::Transport(format!(
                "expected {expected} embeddings, got {}",
                data.len()
            )));
        }
        let mut out: Vec<Option<Vec<f64>>> = vec![None; expected];
        for (pos, item) in data.iter().enumerate() {
            let slot = item
                .get("index")
                .and_then(Value::as_u64)
                .map(|i| i as usize)
                .unwrap_or(pos);
            let vec = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Transport("item without `embedding`".into()))?
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| Error::Transport("non-numeric embedding entry".into())))
                .collect::<Result<Vec<f64>>>()?;
            *out
                .get_mut(slot)
                .ok_or_else(|| Error::Transport(format!("embedding index {slot} out of range")))? = Some(vec);
        }
        out.into_iter()
            .map(|v| v.ok_or_else(|| Error::Transport("missing embedding in reply".into())))
            .collect()
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn provider_id(&self) -> String {
        format!("remote:{}", self.spec.endpoint)
    }

    fn model(&self) -> String {
        self.spec.model.clone()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size()) {
            let body = json!({ "input": chunk, "model": self.spec.model }).to_string();
            let raw = post_with_retry(
                self.transport.as_ref(),
                &self.spec.endpoint,
                self.api_key.as_deref(),
                &body,
                self.spec.retry,
                &self.retries,
            )?;
            out.extend(Self::parse(&raw, chunk.len())?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::mock::ScriptedTransport;

    fn spec(batch: usize) -> RemoteEmbedSpec {
        RemoteEmbedSpec {
            endpoint: "http://e".into(),
            model: "mini".into(),
            batch_size: batch,
            retry: RetryPolicy {
                max_retries: 1,
                backoff_ms: 1,
            },
            api_key_env: "UNUSED".into(),
        }
    }

    #[test]
    fn batches_and_reorders_by_index() {
        let t = Arc::new(ScriptedTransport::new(vec![
            ScriptedTransport::ok(r#"{"data":[{"index":1,"embedding":[0,2]},{"index":0,"embedding":[1,0]}]}"#),
            ScriptedTransport::ok(r#"{"data":[{"embedding":[3,4]}]}"#),
        ]));
        let e = RemoteEmbedder::new(spec(2), None, t.clone());
        let v = e.embed_batch(&["a", "b", "c"]).unwrap();
        assert_eq!(v, vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 4.0]]);
        let reqs = t.requests.lock().unwrap();
        assert_eq!(reqs.len(), 2);
        let first: Value = serde_json::from_str(&reqs[0]).unwrap();
        assert_eq!(first, json!({"input": ["a", "b"], "model": "mini"}));
    }

    #[test]
    fn short_reply_is_an_error() {
        let t = Arc::new(ScriptedTransport::new(vec![ScriptedTransport::ok(r#"{"data":[]}"#)]));
        let e = RemoteEmbedder::new(spec(8), None, t);
        assert!(e.embed_batch(&["a"]).is_err());
    }
}
