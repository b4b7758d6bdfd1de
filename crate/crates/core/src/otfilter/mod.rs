//! Optimal-transport distance between a candidate's exemplars and the
//! validation set, and top-q′ candidate filtering by that distance.

pub mod simplex;

use std::collections::{HashMap, HashSet};
use std::sync::RwLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::ExemplarSequence;
use crate::embed::{EmbeddingTable, EmbeddingVector};
use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-12;

/// `1 − cos(a, b)`, in `[0, 2]`.
pub fn cost(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    Ok((1.0 - a.cosine(b)?).clamp(0.0, 2.0))
}

/// Finitely supported probability measure over embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<EmbeddingVector>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<EmbeddingVector>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Infeasible("measure without atoms".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: atoms.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Infeasible("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Infeasible(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { atoms, weights })
    }

    pub fn uniform(atoms: Vec<EmbeddingVector>) -> Result<Self> {
        let w = 1.0 / atoms.len().max(1) as f64;
        let weights = vec![w; atoms.len()];
        Self::new(atoms, weights)
    }

    pub fn atoms(&self) -> &[EmbeddingVector] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Row-major coupling between a source and a target measure.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    pi: Vec<f64>,
}

impl TransportPlan {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pi[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pi
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.pi.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }

    pub fn transport_cost(&self, cost: &[f64]) -> f64 {
        self.pi.iter().zip(cost).map(|(p, c)| p * c).sum()
    }
}

pub fn cost_matrix(mu_s: &DiscreteMeasure, mu_v: &DiscreteMeasure) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(mu_s.len() * mu_v.len());
    for a in mu_s.atoms() {
        for b in mu_v.atoms() {
            out.push(cost(a, b)?);
        }
    }
    Ok(out)
}

/// Solver used for transport distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OtSolver {
    /// Exact transportation simplex.
    #[default]
    Exact,
    /// Entropic approximation; cheaper on large validation sets but not exact.
    Sinkhorn { epsilon: f64, max_iter: usize },
}

fn solve_weights(a: &[f64], b: &[f64], cost: &[f64], solver: OtSolver) -> Result<(f64, TransportPlan)> {
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("transport cost".into()));
    }
    let pi = match solver {
        OtSolver::Exact => simplex::solve(a, b, cost)?,
        OtSolver::Sinkhorn { epsilon, max_iter } => sinkhorn(a, b, cost, epsilon, max_iter)?,
    };
    let plan = TransportPlan {
        rows: a.len(),
        cols: b.len(),
        pi,
    };
    let value = plan.transport_cost(cost).max(0.0);
    Ok((value, plan))
}

/// Exact OT(μ_s, μ_v) for a given row-major cost matrix.
pub fn ot_distance(
    mu_s: &DiscreteMeasure,
    mu_v: &DiscreteMeasure,
    cost: &[f64],
) -> Result<(f64, TransportPlan)> {
    ot_distance_with(mu_s, mu_v, cost, OtSolver::Exact)
}

pub fn ot_distance_with(
    mu_s: &DiscreteMeasure,
    mu_v: &DiscreteMeasure,
    cost: &[f64],
    solver: OtSolver,
) -> Result<(f64, TransportPlan)> {
    if cost.len() != mu_s.len() * mu_v.len() {
        return Err(Error::DimensionMismatch {
            expected: mu_s.len() * mu_v.len(),
            got: cost.len(),
        });
    }
    solve_weights(mu_s.weights(), mu_v.weights(), cost, solver)
}

/// Entropy-regularized transport via Sinkhorn scaling.
pub fn sinkhorn(a: &[f64], b: &[f64], cost: &[f64], epsilon: f64, max_iter: usize) -> Result<Vec<f64>> {
    if !(epsilon.is_finite() && epsilon > 0.0) || max_iter == 0 {
        return Err(Error::Config("sinkhorn needs epsilon > 0 and max_iter > 0".into()));
    }
    let (m, n) = (a.len(), b.len());
    let kernel: Vec<f64> = cost.iter().map(|c| (-c / epsilon).exp()).collect();
    let mut u = vec![1.0; m];
    let mut v = vec![1.0; n];
    for _ in 0..max_iter {
        for i in 0..m {
            let s: f64 = (0..n).map(|j| kernel[i * n + j] * v[j]).sum();
            u[i] = a[i] / s;
        }
        for j in 0..n {
            let s: f64 = (0..m).map(|i| kernel[i * n + j] * u[i]).sum();
            v[j] = b[j] / s;
        }
        let err: f64 = (0..m)
            .map(|i| {
                let r: f64 = (0..n).map(|j| u[i] * kernel[i * n + j] * v[j]).sum();
                (r - a[i]).abs()
            })
            .sum();
        if err < 1e-12 {
            break;
        }
    }
    let pi: Vec<f64> = (0..m * n).map(|idx| u[idx / n] * kernel[idx] * v[idx % n]).collect();
    if pi.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("sinkhorn underflow; raise epsilon".into()));
    }
    Ok(pi)
}

/// μ_s: uniform over the sequence's exemplars. Atoms are kept in ascending
/// pool order, so every ordering of a subset yields the same measure.
pub fn subset_measure(sequence: &ExemplarSequence, table: &EmbeddingTable) -> Result<DiscreteMeasure> {
    let atoms = sequence
        .subset_key()
        .into_iter()
        .map(|p| table.pool_vector(p).cloned())
        .collect::<Result<Vec<_>>>()?;
    DiscreteMeasure::uniform(atoms)
}

/// μ_v: uniform over the validation embeddings.
pub fn validation_measure(table: &EmbeddingTable) -> Result<DiscreteMeasure> {
    if table.validation.is_empty() {
        return Err(Error::EmptyValidation);
    }
    DiscreteMeasure::uniform(table.validation.clone())
}

/// Precomputed pool-to-validation costs plus a memo of subset distances.
///
/// The memo is keyed by the sorted subset, so orderings of one subset share a
/// single solve. It is safe to share across threads and across iterations.
pub struct OtIndex {
    costs: Vec<Vec<f64>>,
    target: Vec<f64>,
    solver: OtSolver,
    memo: RwLock<HashMap<Vec<usize>, f64>>,
}

impl OtIndex {
    pub fn new(table: &EmbeddingTable, solver: OtSolver) -> Result<Self> {
        let mu_v = validation_measure(table)?;
        let costs = table
            .pool
            .par_iter()
            .map(|p| mu_v.atoms().iter().map(|v| cost(p, v)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            costs,
            target: mu_v.weights().to_vec(),
            solver,
            memo: RwLock::new(HashMap::new()),
        })
    }

    pub fn memo_len(&self) -> usize {
        self.memo.read().unwrap().len()
    }

    fn solve_subset(&self, key: &[usize]) -> Result<f64> {
        let mut cost = Vec::with_capacity(key.len() * self.target.len());
        for &p in key {
            let row = self
                .costs
                .get(p)
                .ok_or_else(|| Error::UnresolvedId(format!("#{p}")))?;
            cost.extend_from_slice(row);
        }
        let w = 1.0 / key.len() as f64;
        Ok(solve_weights(&vec![w; key.len()], &self.target, &cost, self.solver)?.0)
    }

    /// OT distance of one sequence's subset to the validation measure.
    pub fn distance(&self, sequence: &ExemplarSequence) -> Result<f64> {
        let key = sequence.subset_key();
        if let Some(d) = self.memo.read().unwrap().get(&key) {
            return Ok(*d);
        }
        let d = self.solve_subset(&key)?;
        self.memo.write().unwrap().entry(key).or_insert(d);
        Ok(d)
    }

    /// Distances for many sequences; each distinct subset is solved at most once.
    pub fn distances(&self, sequences: &[ExemplarSequence]) -> Result<Vec<f64>> {
        let keys: Vec<Vec<usize>> = sequences.iter().map(ExemplarSequence::subset_key).collect();
        let missing: Vec<Vec<usize>> = {
            let memo = self.memo.read().unwrap();
            let mut seen = HashSet::new();
            keys.iter()
                .filter(|k| !memo.contains_key(*k) && seen.insert((*k).clone()))
                .cloned()
                .collect()
        };
        let solved = missing
            .par_iter()
            .map(|k| self.solve_subset(k).map(|d| (k.clone(), d)))
            .collect::<Result<Vec<_>>>()?;
        {
            let mut memo = self.memo.write().unwrap();
            for (k, d) in solved {
                memo.entry(k).or_insert(d);
            }
        }
        let memo = self.memo.read().unwrap();
        Ok(keys.iter().map(|k| memo[k]).collect())
    }

    /// Candidate indices sorted by distance (ascending, or descending when
    /// `largest`), ties by input position. Exact duplicates keep only their
    /// first occurrence.
    pub fn rank(&self, candidates: &[ExemplarSequence], largest: bool) -> Result<Vec<(usize, f64)>> {
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let dists = self.distances(candidates)?;
        let mut seen = HashSet::new();
        let mut ranked: Vec<(usize, f64)> = dists
            .into_iter()
            .enumerate()
            .filter(|(i, _)| seen.insert(&candidates[*i]))
            .collect();
        if largest {
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        } else {
            ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        }
        Ok(ranked)
    }

    /// Q_t′: the `q_prime` candidates closest to the validation set.
    pub fn filter_top(&self, candidates: &[ExemplarSequence], q_prime: usize) -> Result<Vec<ExemplarSequence>> {
        if q_prime == 0 {
            return Err(Error::Config("q' must be at least 1".into()));
        }
        Ok(self
            .rank(candidates, false)?
            .into_iter()
            .take(q_prime)
            .map(|(i, _)| candidates[i].clone())
            .collect())
    }
}

/// One-shot form of [`OtIndex::filter_top`] for callers without an index.
pub fn filter_top(
    candidates: &[ExemplarSequence],
    q_prime: usize,
    table: &EmbeddingTable,
) -> Result<Vec<ExemplarSequence>> {
    OtIndex::new(table, OtSolver::Exact)?.filter_top(candidates, q_prime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn unit(v: Vec<f64>) -> EmbeddingVector {
        EmbeddingVector::normalized(v).unwrap()
    }

    fn random_unit(r: &mut impl Rng, d: usize) -> EmbeddingVector {
        unit((0..d).map(|_| r.gen_range(-1.0..1.0)).collect())
    }

    /// Independent oracle: enumerate every basis of the transportation
    /// polytope, solve it, keep feasible vertices, return the cheapest.
    fn vertex_enumeration(a: &[f64], b: &[f64], cost: &[f64]) -> f64 {
        let (m, n) = (a.len(), b.len());
        let cells = m * n;
        let rank = m + n - 1;
        let mut best = f64::INFINITY;
        let mut combo: Vec<usize> = (0..rank).collect();
        loop {
            // Equality system restricted to the chosen cells, dropping the last column constraint.
            let mut mat = vec![vec![0.0; rank + 1]; rank];
            for (c, &cell) in combo.iter().enumerate() {
                let (i, j) = (cell / n, cell % n);
                mat[i][c] = 1.0;
                if j < n - 1 {
                    mat[m + j][c] = 1.0;
                }
            }
            for i in 0..m {
                mat[i][rank] = a[i];
            }
            for j in 0..n - 1 {
                mat[m + j][rank] = b[j];
            }
            if let Some(x) = gauss(mat) {
                if x.iter().all(|&v| v >= -1e-12) {
                    let mut full = vec![0.0; cells];
                    for (c, &cell) in combo.iter().enumerate() {
                        full[cell] = x[c];
                    }
                    let col_ok = (0..n).all(|j| ((0..m).map(|i| full[i * n + j]).sum::<f64>() - b[j]).abs() < 1e-9);
                    if col_ok {
                        best = best.min(full.iter().zip(cost).map(|(x, c)| x * c).sum());
                    }
                }
            }
            // next combination
            let mut k = rank;
            loop {
                if k == 0 {
                    return best;
                }
                k -= 1;
                if combo[k] < cells - rank + k {
                    combo[k] += 1;
                    for t in k + 1..rank {
                        combo[t] = combo[t - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn gauss(mut m: Vec<Vec<f64>>) -> Option<Vec<f64>> {
        let n = m.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
            if m[piv][col].abs() < 1e-12 {
                return None;
            }
            m.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    for c in col..=n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
        Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
    }

    #[test]
    fn cost_examples() {
        let a = unit(vec![1.0, 0.0]);
        let b = unit(vec![0.0, 1.0]);
        let c = unit(vec![-1.0, 0.0]);
        assert_eq!(cost(&a, &a).unwrap(), 0.0);
        assert!((cost(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cost(&a, &c).unwrap(), 2.0);
        assert_eq!(cost(&a, &b).unwrap(), cost(&b, &a).unwrap());
        let zero = EmbeddingVector::new(vec![0.0, 0.0]).unwrap();
        assert!(matches!(cost(&a, &zero), Err(Error::ZeroVector)));
    }

    #[test]
    fn identical_measures_have_zero_distance() {
        let mut r = rng::stream(1, "t", 0);
        let atoms: Vec<_> = (0..4).map(|_| random_unit(&mut r, 5)).collect();
        let mu = DiscreteMeasure::uniform(atoms).unwrap();
        let c = cost_matrix(&mu, &mu).unwrap();
        let (d, plan) = ot_distance(&mu, &mu, &c).unwrap();
        assert!(d.abs() < 1e-12);
        for s in plan.row_sums() {
            assert!((s - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn single_atoms_force_the_plan() {
        let a = DiscreteMeasure::uniform(vec![unit(vec![1.0, 0.0])]).unwrap();
        let b = DiscreteMeasure::uniform(vec![unit(vec![1.0, 1.0])]).unwrap();
        let (d, plan) = ot_distance(&a, &b, &[0.7]).unwrap();
        assert_eq!(d, 0.7);
        assert_eq!(plan.get(0, 0), 1.0);
    }

    #[test]
    fn matches_vertex_enumeration_on_3x4() {
        let mut r = rng::stream(2, "t", 0);
        for _ in 0..25 {
            let s: Vec<_> = (0..3).map(|_| random_unit(&mut r, 4)).collect();
            let v: Vec<_> = (0..4).map(|_| random_unit(&mut r, 4)).collect();
            let mu_s = DiscreteMeasure::uniform(s).unwrap();
            let mu_v = DiscreteMeasure::uniform(v).unwrap();
            let c = cost_matrix(&mu_s, &mu_v).unwrap();
            let (d, plan) = ot_distance(&mu_s, &mu_v, &c).unwrap();
            let oracle = vertex_enumeration(mu_s.weights(), mu_v.weights(), &c);
            assert!((d - oracle).abs() < 1e-9, "{d} vs {oracle}");
            for (got, want) in plan.col_sums().iter().zip(mu_v.weights()) {
                assert!((got - want).abs() < 1e-9);
            }
            assert!(plan.as_slice().iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn symmetric_under_transpose() {
        let mut r = rng::stream(3, "t", 0);
        for _ in 0..20 {
            let mu_s = DiscreteMeasure::uniform((0..3).map(|_| random_unit(&mut r, 6)).collect()).unwrap();
            let mu_v = DiscreteMeasure::uniform((0..7).map(|_| random_unit(&mut r, 6)).collect()).unwrap();
            let c = cost_matrix(&mu_s, &mu_v).unwrap();
            let ct = cost_matrix(&mu_v, &mu_s).unwrap();
            let (d1, _) = ot_distance(&mu_s, &mu_v, &c).unwrap();
            let (d2, _) = ot_distance(&mu_v, &mu_s, &ct).unwrap();
            assert!((d1 - d2).abs() < 1e-9);
        }
    }

    #[test]
    fn bad_weights_rejected() {
        let a = unit(vec![1.0, 0.0]);
        assert!(matches!(
            DiscreteMeasure::new(vec![a.clone(), a.clone()], vec![0.5, 0.6]),
            Err(Error::Infeasible(_))
        ));
        assert!(DiscreteMeasure::new(vec![a.clone()], vec![-1.0]).is_err());
        let mu = DiscreteMeasure::uniform(vec![a]).unwrap();
        assert!(ot_distance(&mu, &mu, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn sinkhorn_approaches_exact() {
        let mut r = rng::stream(4, "t", 0);
        let mu_s = DiscreteMeasure::uniform((0..3).map(|_| random_unit(&mut r, 4)).collect()).unwrap();
        let mu_v = DiscreteMeasure::uniform((0..5).map(|_| random_unit(&mut r, 4)).collect()).unwrap();
        let c = cost_matrix(&mu_s, &mu_v).unwrap();
        let (exact, _) = ot_distance(&mu_s, &mu_v, &c).unwrap();
        let (approx, plan) = ot_distance_with(
            &mu_s,
            &mu_v,
            &c,
            OtSolver::Sinkhorn {
                epsilon: 0.005,
                max_iter: 5000,
            },
        )
        .unwrap();
        assert!(approx >= exact - 1e-9);
        assert!(approx - exact < 0.05);
        for s in plan.row_sums() {
            assert!((s - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    fn table(pool: usize, val: usize, seed: u64) -> EmbeddingTable {
        let mut r = rng::stream(seed, "t", 0);
        EmbeddingTable {
            pool: (0..pool).map(|_| random_unit(&mut r, 8)).collect(),
            validation: (0..val).map(|_| random_unit(&mut r, 8)).collect(),
        }
    }

    #[test]
    fn subset_measure_ignores_order() {
        let t = table(6, 3, 5);
        let a = subset_measure(&ExemplarSequence::new(vec![4, 1, 2, 0], None).unwrap(), &t).unwrap();
        let b = subset_measure(&ExemplarSequence::new(vec![0, 2, 4, 1], None).unwrap(), &t).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.weights(), &[0.25; 4]);
        let one = subset_measure(&ExemplarSequence::new(vec![3], Some(2)).unwrap(), &t).unwrap();
        assert_eq!(one.weights(), &[1.0]);
        assert!(subset_measure(&ExemplarSequence::new(vec![9], None).unwrap(), &t).is_err());
    }

    #[test]
    fn filter_matches_exhaustive_sort() {
        let t = table(12, 5, 6);
        let mut r = rng::stream(6, "cands", 0);
        let cands: Vec<ExemplarSequence> = (0..20)
            .map(|_| {
                let mut ids: Vec<usize> = (0..12).collect();
                use rand::seq::SliceRandom;
                ids.shuffle(&mut r);
                ExemplarSequence::new(ids[..3].to_vec(), None).unwrap()
            })
            .collect();
        let index = OtIndex::new(&t, OtSolver::Exact).unwrap();
        let got = index.filter_top(&cands, 5).unwrap();

        let mu_v = validation_measure(&t).unwrap();
        let mut brute: Vec<(usize, f64)> = cands
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mu = subset_measure(c, &t).unwrap();
                let cm = cost_matrix(&mu, &mu_v).unwrap();
                (i, vertex_enumeration(mu.weights(), mu_v.weights(), &cm))
            })
            .collect();
        brute.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let want: Vec<_> = brute.iter().take(5).map(|(i, _)| cands[*i].clone()).collect();
        assert_eq!(got, want);

        // q' ≥ |candidates| returns everything in rank order; all inputs present.
        let all = index.filter_top(&cands, 50).unwrap();
        assert_eq!(all.len(), cands.iter().collect::<HashSet<_>>().len());
    }

    #[test]
    fn zero_distance_subset_ranks_first() {
        let mut t = table(6, 0, 7);
        t.validation = vec![t.pool[2].clone(), t.pool[5].clone()];
        let cands = vec![
            ExemplarSequence::new(vec![0, 1], None).unwrap(),
            ExemplarSequence::new(vec![5, 2], None).unwrap(),
            ExemplarSequence::new(vec![3, 4], None).unwrap(),
            ExemplarSequence::new(vec![2, 5], None).unwrap(),
        ];
        let index = OtIndex::new(&t, OtSolver::Exact).unwrap();
        let top = index.filter_top(&cands, 2).unwrap();
        assert_eq!(top, vec![cands[1].clone(), cands[3].clone()]);
        // Both orderings share one memo entry.
        assert!(index.distance(&cands[1]).unwrap().abs() < 1e-12);
        assert_eq!(index.memo_len(), 3);
    }

    #[test]
    fn duplicates_collapse_and_empty_is_error() {
        let t = table(5, 2, 8);
        let index = OtIndex::new(&t, OtSolver::Exact).unwrap();
        let s = ExemplarSequence::new(vec![0, 1], None).unwrap();
        assert_eq!(index.filter_top(&[s.clone(), s.clone()], 5).unwrap(), vec![s]);
        assert!(matches!(index.filter_top(&[], 5), Err(Error::EmptyCandidates)));
    }
}
