//! Sequence and exemplar embeddings h(·) with a content-addressed cache.

pub mod cache;
pub mod local;
pub mod remote;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::domain::{ExemplarPool, ExemplarSequence, InstructionSet, ValidationSet};
use crate::error::{Error, Result};
use crate::evaluate::{render_block, render_context};
use crate::http::ReqwestTransport;

pub use cache::{cache_key, EmbeddingCache};
pub use local::LocalHashEmbedder;
pub use remote::{RemoteEmbedSpec, RemoteEmbedder};

/// A finite, fixed-length embedding. Cheap to clone.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Arc<[f64]>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding entry {v}")));
        }
        Ok(Self(values.into()))
    }

    /// Scales to unit L2 norm. Zero vectors are rejected.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        Self::new(values.into_iter().map(|v| v / norm).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum())
    }

    pub fn cosine(&self, other: &Self) -> Result<f64> {
        let (na, nb) = (self.norm(), other.norm());
        if na == 0.0 || nb == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok((self.dot(other)? / (na * nb)).clamp(-1.0, 1.0))
    }

    /// Element-wise mean of equally sized vectors.
    pub fn mean<'a>(vectors: impl IntoIterator<Item = &'a EmbeddingVector>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for v in vectors {
            if sum.is_empty() {
                sum = vec![0.0; v.dim()];
            } else if v.dim() != sum.len() {
                return Err(Error::DimensionMismatch {
                    expected: sum.len(),
                    got: v.dim(),
                });
            }
            sum.iter_mut().zip(v.values()).for_each(|(s, x)| *s += x);
            count += 1;
        }
        if count == 0 {
            return Err(Error::EmptyCandidates);
        }
        Self::new(sum.into_iter().map(|s| s / count as f64).collect())
    }
}

/// Something that maps texts to raw vectors. Normalization and caching live in [`Embedder`].
pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> String;

    fn model(&self) -> String;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmbedderSpec {
    Remote(RemoteEmbedSpec),
    LocalDeterministic {
        #[serde(default = "default_local_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_local_dim() -> usize {
    64
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::LocalDeterministic {
            dim: default_local_dim(),
            seed: 0,
        }
    }
}

impl EmbedderSpec {
    pub fn build_provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self {
            EmbedderSpec::LocalDeterministic { dim, seed } => {
                Box::new(LocalHashEmbedder::new(*dim, *seed)?)
            }
            EmbedderSpec::Remote(spec) => {
                let transport = Arc::new(ReqwestTransport::new(Duration::from_secs(60))?);
                Box::new(RemoteEmbedder::from_env(spec.clone(), transport))
            }
        })
    }
}

/// How a sequence becomes one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingMode {
    /// Embed the rendered prompt text; sensitive to order.
    #[default]
    OrderedText,
    /// Mean of the member exemplars' block embeddings; order-invariant.
    AvgExemplar,
}

/// Caching, normalizing front end over a provider.
pub struct Embedder {
    provider: Box<dyn EmbeddingProvider>,
    cache: Arc<EmbeddingCache>,
    dim: Mutex<Option<usize>>,
    requests: AtomicUsize,
    max_in_flight: usize,
    provider_id: String,
    model: String,
}

impl Embedder {
    pub fn new(provider: Box<dyn EmbeddingProvider>, cache: Arc<EmbeddingCache>) -> Self {
        let provider_id = provider.provider_id();
        let model = provider.model();
        let dim = cache.dim();
        Self {
            provider,
            cache,
            dim: Mutex::new(dim),
            requests: AtomicUsize::new(0),
            max_in_flight: 8,
            provider_id,
            model,
        }
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn local(dim: usize, seed: u64) -> Result<Self> {
        Ok(Self::new(
            Box::new(LocalHashEmbedder::new(dim, seed)?),
            Arc::new(EmbeddingCache::new()),
        ))
    }

    pub fn cache(&self) -> &Arc<EmbeddingCache> {
        &self.cache
    }

    /// Number of texts sent to the provider so far.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn dim(&self) -> Option<usize> {
        *self.dim.lock().unwrap()
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        let mut dim = self.dim.lock().unwrap();
        match *dim {
            Some(expected) if expected != got => Err(Error::DimensionMismatch { expected, got }),
            Some(_) => Ok(()),
            None => {
                *dim = Some(got);
                Ok(())
            }
        }
    }

    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(self.embed_texts(&[text])?.remove(0))
    }

    /// Embeds many texts; only cache misses reach the provider.
    pub fn embed_texts<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<EmbeddingVector>> {
        let keys: Vec<_> = texts
            .iter()
            .map(|t| {
                if t.as_ref().is_empty() {
                    Err(Error::Config("cannot embed empty text".into()))
                } else {
                    Ok(cache_key(&self.provider_id, &self.model, t.as_ref()))
                }
            })
            .collect::<Result<_>>()?;

        let mut misses: Vec<usize> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, key) in keys.iter().enumerate() {
            if self.cache.get(key).is_none() && seen.insert(*key) {
                misses.push(i);
            }
        }

        if !misses.is_empty() {
            let miss_texts: Vec<&str> = misses.iter().map(|&i| texts[i].as_ref()).collect();
            let raw = self.fetch(&miss_texts)?;
            for (&i, values) in misses.iter().zip(raw) {
                let v = EmbeddingVector::normalized(values)?;
                self.check_dim(v.dim())?;
                self.cache.insert(keys[i], v);
            }
        }

        keys.iter()
            .map(|k| {
                let v = self.cache.get(k).expect("embedding present after fetch");
                self.check_dim(v.dim())?;
                Ok(v)
            })
            .collect()
    }

    fn fetch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        self.requests.fetch_add(texts.len(), Ordering::Relaxed);
        if self.max_in_flight <= 1 || texts.len() < 2 {
            return self.provider.embed_batch(texts);
        }
        let per = texts.len().div_ceil(self.max_in_flight);
        let parts: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|s| {
            let handles: Vec<_> = texts
                .chunks(per)
                .map(|chunk| s.spawn(move || self.provider.embed_batch(chunk)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("embedding thread panicked"))
                .collect()
        });
        let mut out = Vec::with_capacity(texts.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}

/// Per-exemplar embeddings of D and D_V; the ground space for transport costs.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub pool: Vec<EmbeddingVector>,
    pub validation: Vec<EmbeddingVector>,
}

impl EmbeddingTable {
    pub fn len(&self) -> usize {
        self.pool.len() + self.validation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pool_vector(&self, pos: usize) -> Result<&EmbeddingVector> {
        self.pool
            .get(pos)
            .ok_or_else(|| Error::UnresolvedId(format!("#{pos}")))
    }
}

/// Embeds every exemplar of the pool and the validation set as its rendered block.
pub fn precompute_pool_embeddings(
    embedder: &Embedder,
    pool: &ExemplarPool,
    validation: &ValidationSet,
) -> Result<EmbeddingTable> {
    let pool_texts: Vec<String> = pool.iter().map(render_block).collect();
    let val_texts: Vec<String> = validation.items().iter().map(render_block).collect();
    Ok(EmbeddingTable {
        pool: embedder.embed_texts(&pool_texts)?,
        validation: embedder.embed_texts(&val_texts)?,
    })
}

/// h(E) for one sequence.
///
/// In `AvgExemplar` mode the instruction, when present, is embedded on its own
/// and averaged in as one more member. `table` short-cuts the per-exemplar
/// lookups when available.
pub fn embed_sequence(
    embedder: &Embedder,
    sequence: &ExemplarSequence,
    pool: &ExemplarPool,
    instructions: Option<&InstructionSet>,
    mode: EmbeddingMode,
    table: Option<&EmbeddingTable>,
) -> Result<EmbeddingVector> {
    match mode {
        EmbeddingMode::OrderedText => {
            embedder.embed_text(&render_context(sequence, pool, instructions)?)
        }
        EmbeddingMode::AvgExemplar => {
            let mut members = Vec::with_capacity(sequence.len() + 1);
            for &pos in sequence.exemplars() {
                members.push(match table {
                    Some(t) => t.pool_vector(pos)?.clone(),
                    None => embedder.embed_text(&render_block(pool.get(pos)?))?,
                });
            }
            if let Some(idx) = sequence.instruction() {
                let text = instructions.ok_or(Error::UnresolvedInstruction(idx))?.get(idx)?;
                members.push(embedder.embed_text(&format!("Instruction: {text}"))?);
            }
            EmbeddingVector::mean(&members)
        }
    }
}

/// Embeds many sequences, sharing one batched provider round-trip.
pub fn embed_sequences(
    embedder: &Embedder,
    sequences: &[ExemplarSequence],
    pool: &ExemplarPool,
    instructions: Option<&InstructionSet>,
    mode: EmbeddingMode,
    table: Option<&EmbeddingTable>,
) -> Result<Vec<EmbeddingVector>> {
    match mode {
        EmbeddingMode::OrderedText => {
            let texts = sequences
                .iter()
                .map(|s| render_context(s, pool, instructions))
                .collect::<Result<Vec<_>>>()?;
            embedder.embed_texts(&texts)
        }
        EmbeddingMode::AvgExemplar => sequences
            .iter()
            .map(|s| embed_sequence(embedder, s, pool, instructions, mode, table))
            .collect(),
    }
}
