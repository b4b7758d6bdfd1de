//! Task directories: `pool.jsonl`, `validation.jsonl`, optional
//! `instructions.jsonl`, and a `manifest.json` describing how they were made.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;
use sha2::{Digest, Sha256};

use super::config::hex;
use crate::domain::{ExemplarPool, InstructionSet, ValidationSet};
use crate::embed::{Embedder, EmbedderSpec, EmbeddingCache};
use crate::error::Result;
use crate::evaluate::{default_weights, ExactRuleOracle, PlantedOracle, PlantedParams, RemoteLlmScorer, Scorer, ScorerSpec};
use crate::http::ReqwestTransport;

pub const POOL_FILE: &str = "pool.jsonl";
pub const VALIDATION_FILE: &str = "validation.jsonl";
pub const INSTRUCTIONS_FILE: &str = "instructions.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct Task {
    pub dir: PathBuf,
    pub pool: ExemplarPool,
    pub validation: ValidationSet,
    pub instructions: Option<InstructionSet>,
}

impl Task {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let pool = ExemplarPool::load(dir.join(POOL_FILE))?;
        let validation = ValidationSet::load(dir.join(VALIDATION_FILE), &pool)?;
        let ipath = dir.join(INSTRUCTIONS_FILE);
        let instructions = if ipath.exists() {
            Some(InstructionSet::load(ipath)?)
        } else {
            None
        };
        Ok(Self {
            dir,
            pool,
            validation,
            instructions,
        })
    }

    /// Writes the task files and a manifest; returns the manifest path.
    pub fn write(
        dir: impl AsRef<Path>,
        pool: &ExemplarPool,
        validation: &ValidationSet,
        instructions: Option<&InstructionSet>,
        manifest: &Value,
    ) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        pool.save(dir.join(POOL_FILE))?;
        validation.save(dir.join(VALIDATION_FILE))?;
        if let Some(p) = instructions {
            p.save(dir.join(INSTRUCTIONS_FILE))?;
        }
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(manifest)? + "\n")?;
        Ok(path)
    }

    /// Content hash of the task files (manifest excluded).
    pub fn digest(&self) -> Result<String> {
        let mut h = Sha256::new();
        for name in [POOL_FILE, VALIDATION_FILE, INSTRUCTIONS_FILE] {
            let path = self.dir.join(name);
            if path.exists() {
                h.update(name.as_bytes());
                h.update(fs::read(path)?);
            }
        }
        Ok(hex(&h.finalize()[..16]))
    }
}

/// Builds the black box described by `spec` for this pool.
///
/// The planted oracle defaults to every pool exemplar not tagged noisy as
/// clean and to decreasing position weights for the longest allowed sequence.
pub fn build_scorer(spec: &ScorerSpec, pool: &ExemplarPool, max_len: usize) -> Result<Box<dyn Scorer>> {
    Ok(match spec {
        ScorerSpec::SimPlanted {
            clean,
            weights,
            instruction_bonus,
            seed,
        } => {
            let clean = match clean {
                Some(ids) => {
                    for id in ids {
                        pool.position(id)?;
                    }
                    ids.iter().cloned().collect()
                }
                None => pool.iter().filter(|e| !e.is_noisy()).map(|e| e.id.clone()).collect(),
            };
            Box::new(PlantedOracle::new(PlantedParams {
                clean,
                weights: weights.clone().unwrap_or_else(|| default_weights(max_len)),
                instruction_bonus: instruction_bonus.clone(),
                seed: *seed,
            })?)
        }
        ScorerSpec::SimExactrule => Box::new(ExactRuleOracle),
        ScorerSpec::RemoteLlm(remote) => {
            let transport = Arc::new(ReqwestTransport::new(Duration::from_secs(120))?);
            Box::new(RemoteLlmScorer::from_env(remote.clone(), transport)?)
        }
    })
}

/// Builds the embedder, loading the on-disk cache when a path is given.
pub fn build_embedder(spec: &EmbedderSpec, cache: Option<&Path>) -> Result<Embedder> {
    let cache = match cache {
        Some(p) => EmbeddingCache::open(p)?,
        None => EmbeddingCache::new(),
    };
    Ok(Embedder::new(spec.build_provider()?, Arc::new(cache)))
}

/// Default cache location: remote embeddings are cached next to the task,
/// the local embedder is cheap enough to recompute.
pub fn default_cache_path(spec: &EmbedderSpec, task_dir: &Path) -> Option<PathBuf> {
    match spec {
        EmbedderSpec::Remote(_) => Some(task_dir.join("embed-cache.bin")),
        EmbedderSpec::LocalDeterministic { .. } => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Exemplar;

    fn fixture() -> (ExemplarPool, ValidationSet) {
        let pool = ExemplarPool::new(vec![
            Exemplar::new("0", "1", "2"),
            Exemplar::new("1", "3", "4").with_meta("noise", "true"),
        ])
        .unwrap();
        let val = ValidationSet::new(vec![Exemplar::new("v0", "5", "6")], &pool).unwrap();
        (pool, val)
    }

    #[test]
    fn write_load_roundtrip_and_digest() {
        let dir = tempfile::tempdir().unwrap();
        let (pool, val) = fixture();
        let instr = InstructionSet::new(vec!["Add one.".into()]);
        let m = Task::write(dir.path(), &pool, &val, Some(&instr), &serde_json::json!({"g": 1})).unwrap();
        assert!(m.ends_with(MANIFEST_FILE));
        let task = Task::load(dir.path()).unwrap();
        assert_eq!(task.pool, pool);
        assert_eq!(task.validation, val);
        assert_eq!(task.instructions, Some(instr));
        let d = task.digest().unwrap();
        assert_eq!(d, Task::load(dir.path()).unwrap().digest().unwrap());
        fs::write(dir.path().join(POOL_FILE), "{\"id\":\"0\",\"input\":\"1\",\"output\":\"9\"}\n").unwrap();
        assert_ne!(d, Task::load(dir.path()).unwrap().digest().unwrap());
    }

    #[test]
    fn planted_default_clean_set_skips_noisy() {
        let (pool, _) = fixture();
        let s = build_scorer(&ScorerSpec::default(), &pool, 1).unwrap();
        assert_eq!(s.describe(), "sim-planted");
        let bad = ScorerSpec::SimPlanted {
            clean: Some(vec!["nope".into()]),
            weights: None,
            instruction_bonus: Default::default(),
            seed: 0,
        };
        assert!(build_scorer(&bad, &pool, 1).is_err());
    }
}
