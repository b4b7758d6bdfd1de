//! Resolved run configuration: strategy config plus scorer and embedder specs.
//!
//! Layers merge as JSON objects: defaults, then the config file, then flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::embed::EmbedderSpec;
use crate::error::{Error, Result};
use crate::evaluate::ScorerSpec;
use crate::optimizer::RunConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub run: RunConfig,
    pub scorer: ScorerSpec,
    pub embedder: EmbedderSpec,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        self.run.validate()
    }

    /// Stable identity of a run: hash of the canonical `RunSpec` JSON and the task digest.
    pub fn run_id(&self, task_digest: &str) -> Result<String> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self)?);
        h.update(b"\0");
        h.update(task_digest.as_bytes());
        Ok(hex(&h.finalize()[..8]))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads a JSON config file into an object.
pub fn read_config_file(path: impl AsRef<Path>) -> Result<Map<String, Value>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(Error::Config(format!("{}: top level must be an object", path.display()))),
        Err(e) => Err(Error::Config(format!("{}: {e}", path.display()))),
    }
}

/// Sets `section.key` (dotted keys descend further), creating objects as needed.
pub fn set_path(root: &mut Map<String, Value>, path: &str, value: Value) {
    let mut parts = path.split('.').peekable();
    let mut cur = root;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            cur.insert(part.to_string(), value);
            return;
        }
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
        if !entry.is_object() {
            *entry = Value::Object(Map::new());
        }
        cur = entry.as_object_mut().expect("just made an object");
    }
}

/// Deserializes a merged object, turning unknown keys and bad values into config errors.
///
/// A `scorer` or `embedder` section without a `kind` takes the default kind,
/// so `--embed-dim 32` alone still selects the local embedder.
pub fn resolve(mut map: Map<String, Value>) -> Result<RunSpec> {
    let defaults = to_map(&RunSpec::default())?;
    for section in ["scorer", "embedder"] {
        if let Some(Value::Object(m)) = map.get_mut(section) {
            if !m.contains_key("kind") {
                m.insert("kind".into(), defaults[section]["kind"].clone());
            }
        }
    }
    let spec: RunSpec =
        serde_json::from_value(Value::Object(map)).map_err(|e| Error::Config(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

/// A `RunSpec` as a JSON object, for layering overrides on a stored snapshot.
pub fn to_map(spec: &RunSpec) -> Result<Map<String, Value>> {
    match serde_json::to_value(spec)? {
        Value::Object(m) => Ok(m),
        _ => unreachable!("RunSpec serializes to an object"),
    }
}
