//! Cosine-similarity retrieval over the per-exemplar embedding table.

use std::collections::BTreeSet;

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};

/// Pool positions ordered by mean cosine similarity to the validation
/// embeddings, most similar first; ties keep pool order.
pub fn rank_by_mean_cosine(table: &EmbeddingTable) -> Result<Vec<(usize, f64)>> {
    if table.pool.is_empty() {
        return Err(Error::Config("empty pool".into()));
    }
    if table.validation.is_empty() {
        return Err(Error::EmptyValidation);
    }
    let mut scored = table
        .pool
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let total = table
                .validation
                .iter()
                .map(|v| p.cosine(v))
                .sum::<Result<f64>>()?;
            Ok((i, total / table.validation.len() as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored)
}

/// Union over validation items of their `m` nearest pool exemplars by cosine
/// similarity, as ascending pool positions.
pub fn retrieval_prefilter(table: &EmbeddingTable, m: usize) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::Config("m must be at least 1".into()));
    }
    if table.pool.is_empty() {
        return Err(Error::Config("empty pool".into()));
    }
    let mut keep = BTreeSet::new();
    for v in &table.validation {
        let mut sims = table
            .pool
            .iter()
            .enumerate()
            .map(|(i, p)| Ok((i, p.cosine(v)?)))
            .collect::<Result<Vec<_>>>()?;
        sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        keep.extend(sims.into_iter().take(m).map(|(i, _)| i));
    }
    Ok(keep.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::EmbeddingVector;
    use crate::rng;
    use rand::Rng;

    fn table(pool: usize, val: usize, seed: u64) -> EmbeddingTable {
        let mut r = rng::stream(seed, "t", 0);
        let mut v = || EmbeddingVector::normalized((0..6).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        EmbeddingTable {
            pool: (0..pool).map(|_| v()).collect(),
            validation: (0..val).map(|_| v()).collect(),
        }
    }

    #[test]
    fn saturating_m_keeps_everything() {
        let t = table(8, 3, 1);
        assert_eq!(retrieval_prefilter(&t, 8).unwrap(), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn single_item_keeps_its_nearest() {
        let t = table(20, 1, 2);
        let got = retrieval_prefilter(&t, 3).unwrap();
        let mut brute: Vec<(usize, f64)> = t
            .pool
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.dot(&t.validation[0]).unwrap()))
            .collect();
        brute.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let mut want: Vec<usize> = brute[..3].iter().map(|x| x.0).collect();
        want.sort_unstable();
        assert_eq!(got, want);
        assert!(retrieval_prefilter(&t, 0).is_err());
    }

    #[test]
    fn self_similar_exemplar_ranks_first() {
        let mut t = table(10, 1, 3);
        t.validation = vec![t.pool[7].clone()];
        assert_eq!(rank_by_mean_cosine(&t).unwrap()[0].0, 7);
    }
}
