use super::EmbeddingProvider;
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Offline, deterministic embedder.
///
/// Character trigrams are hashed twice: once on their own and once together
/// with the index of the blank-line separated block they occur in. Each hashed
/// feature adds its count along a pseudo-random ±1 direction derived from
/// `(seed, feature)`, and the sum is L2-normalized. The block-keyed features
/// make the vector depend on exemplar order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalHashEmbedder {
    dim: usize,
    seed: u64,
}

impl LocalHashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dim must be positive".into()));
        }
        Ok(Self { dim, seed })
    }

    fn accumulate(&self, acc: &mut [f64], feature: u64) {
        let key = splitmix64(feature ^ splitmix64(self.seed));
        for (chunk, slots) in acc.chunks_mut(64).enumerate() {
            let bits = splitmix64(key.wrapping_add(chunk as u64));
            for (j, slot) in slots.iter_mut().enumerate() {
                if (bits >> j) & 1 == 1 {
                    *slot += 1.0;
                } else {
                    *slot -= 1.0;
                }
            }
        }
    }

    pub fn embed_one(&self, text: &str) -> Result<Vec<f64>> {
        if text.is_empty() {
            return Err(Error::Config("cannot embed empty text".into()));
        }
        let mut acc = vec![0.0; self.dim];
        let mut buf = [0u8; 12];
        for (block_idx, block) in text.split("\n\n").enumerate() {
            let chars: Vec<char> = block.chars().collect();
            let grams: Box<dyn Iterator<Item = &[char]>> = if chars.len() < 3 {
                Box::new(std::iter::once(&chars[..]))
            } else {
                Box::new(chars.windows(3))
            };
            for gram in grams {
                let mut len = 0;
                for c in gram {
                    len += c.encode_utf8(&mut buf[len..]).len();
                }
                let h = fnv1a(&buf[..len]);
                self.accumulate(&mut acc, h);
                self.accumulate(&mut acc, splitmix64(h ^ (block_idx as u64 + 1).wrapping_mul(0x2545_f491_4f6c_dd1d)));
            }
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Only reachable for blank text where every feature cancels.
            acc[0] = 1.0;
            return Ok(acc);
        }
        acc.iter_mut().for_each(|v| *v /= norm);
        Ok(acc)
    }
}

impl EmbeddingProvider for LocalHashEmbedder {
    fn provider_id(&self) -> String {
        format!("local-hash3:seed={}", self.seed)
    }

    fn model(&self) -> String {
        format!("dim={}", self.dim)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_unit_norm() {
        let e = LocalHashEmbedder::new(64, 9).unwrap();
        let a = e.embed_one("Input: a\nOutput: b").unwrap();
        let b = e.embed_one("Input: a\nOutput: b").unwrap();
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn seed_changes_vectors() {
        let a = LocalHashEmbedder::new(32, 1).unwrap().embed_one("hello").unwrap();
        let b = LocalHashEmbedder::new(32, 2).unwrap().embed_one("hello").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn block_order_matters() {
        let e = LocalHashEmbedder::new(64, 0).unwrap();
        let a = e.embed_one("Input: 1\nOutput: 2\n\nInput: 3\nOutput: 4").unwrap();
        let b = e.embed_one("Input: 3\nOutput: 4\n\nInput: 1\nOutput: 2").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn short_and_non_ascii_text() {
        let e = LocalHashEmbedder::new(70, 0).unwrap();
        assert_eq!(e.embed_one("é").unwrap().len(), 70);
        assert!(e.embed_one("").is_err());
    }
}
