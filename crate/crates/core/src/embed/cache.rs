//! Content-addressed embedding cache with a binary sidecar file.
//!
//! File layout (little-endian):
//!
//! ```text
//! magic "EXSC" | version u32 | dim u32 | count u64 | count × (key [u8; 32], dim × f64)
//! ```
//!
//! Entries are written sorted by key so identical caches serialize identically.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::RwLock;

use sha2::{Digest, Sha256};

use super::EmbeddingVector;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EXSC";
const VERSION: u32 = 1;

pub type CacheKey = [u8; 32];

pub fn cache_key(provider_id: &str, model: &str, text: &str) -> CacheKey {
    let mut h = Sha256::new();
    for part in [provider_id, model, text] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    h.finalize().into()
}

#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: RwLock<HashMap<CacheKey, EmbeddingVector>>,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &CacheKey) -> Option<EmbeddingVector> {
        self.entries.read().unwrap().get(key).cloned()
    }

    pub fn insert(&self, key: CacheKey, value: EmbeddingVector) {
        self.entries.write().unwrap().insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.entries.write().unwrap().clear();
    }

    /// Dimension of the stored vectors, if any are stored.
    pub fn dim(&self) -> Option<usize> {
        self.entries.read().unwrap().values().next().map(|v| v.dim())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let entries = self.entries.read().unwrap();
        let mut sorted: Vec<(&CacheKey, &EmbeddingVector)> = entries.iter().collect();
        sorted.sort_by(|a, b| a.0.cmp(b.0));
        let dim = sorted.first().map(|(_, v)| v.dim()).unwrap_or(0);
        let tmp = path.as_ref().with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            w.write_all(MAGIC)?;
            w.write_all(&VERSION.to_le_bytes())?;
            w.write_all(&(dim as u32).to_le_bytes())?;
            w.write_all(&(sorted.len() as u64).to_le_bytes())?;
            for (key, vec) in sorted {
                if vec.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: vec.dim(),
                    });
                }
                w.write_all(key)?;
                for v in vec.values() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            w.flush()?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Cache("bad magic".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        if u32::from_le_bytes(u32buf) != VERSION {
            return Err(Error::Cache("unsupported version".into()));
        }
        r.read_exact(&mut u32buf)?;
        let dim = u32::from_le_bytes(u32buf) as usize;
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let count = u64::from_le_bytes(u64buf) as usize;
        let mut entries = HashMap::with_capacity(count);
        let mut key = [0u8; 32];
        for _ in 0..count {
            r.read_exact(&mut key)
                .map_err(|_| Error::Cache("truncated entry".into()))?;
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                r.read_exact(&mut u64buf)
                    .map_err(|_| Error::Cache("truncated vector".into()))?;
                values.push(f64::from_le_bytes(u64buf));
            }
            entries.insert(key, EmbeddingVector::new(values)?);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Cache("trailing bytes".into()));
        }
        Ok(Self {
            entries: RwLock::new(entries),
        })
    }

    /// Loads `path` when it exists, otherwise starts empty.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        if path.as_ref().exists() {
            Self::load(path)
        } else {
            Ok(Self::new())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn save_load_is_bit_identical(
            vecs in proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, 5), 1..20)
        ) {
            let cache = EmbeddingCache::new();
            for (i, v) in vecs.iter().enumerate() {
                cache.insert(cache_key("p", "m", &i.to_string()), EmbeddingVector::new(v.clone()).unwrap());
            }
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.bin");
            cache.save(&path).unwrap();
            let back = EmbeddingCache::load(&path).unwrap();
            prop_assert_eq!(back.len(), vecs.len());
            for (i, v) in vecs.iter().enumerate() {
                let got = back.get(&cache_key("p", "m", &i.to_string())).unwrap();
                let bits: Vec<u64> = got.values().iter().map(|x| x.to_bits()).collect();
                let want: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(bits, want);
            }
        }
    }

    #[test]
    fn keys_separate_provider_model_and_text() {
        assert_ne!(cache_key("a", "b", "c"), cache_key("a", "bc", ""));
        assert_ne!(cache_key("a", "b", "c"), cache_key("x", "b", "c"));
    }

    #[test]
    fn corrupt_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(EmbeddingCache::load(&path), Err(Error::Cache(_))));
    }
}
