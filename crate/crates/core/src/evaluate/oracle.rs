//! Deterministic simulated answerers used in place of a paid model.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ScoreRequest, Scorer};
use crate::error::{Error, Result};
use crate::rng::keyed_unit;

/// Position weights used when none are configured for k = 5.
pub const DEFAULT_WEIGHTS_K5: [f64; 5] = [0.4, 0.3, 0.15, 0.1, 0.05];

/// Decreasing position weights summing to one.
pub fn default_weights(k: usize) -> Vec<f64> {
    if k == 5 {
        return DEFAULT_WEIGHTS_K5.to_vec();
    }
    let total = (k * (k + 1) / 2) as f64;
    (0..k).map(|i| (k - i) as f64 / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedParams {
    /// Ids of the clean exemplars.
    pub clean: BTreeSet<String>,
    /// Weight of position i; non-negative and non-increasing.
    pub weights: Vec<f64>,
    /// Additive score bonus per instruction index.
    #[serde(default)]
    pub instruction_bonus: BTreeMap<usize, f64>,
    #[serde(default)]
    pub seed: u64,
}

impl PlantedParams {
    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::OracleParams("no position weights".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::OracleParams(
                "weights must be finite and non-negative".into(),
            ));
        }
        if self.weights.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::OracleParams("weights must be non-increasing".into()));
        }
        if self.instruction_bonus.values().any(|b| !b.is_finite()) {
            return Err(Error::OracleParams("non-finite instruction bonus".into()));
        }
        Ok(())
    }
}

/// Answers correctly with probability `Σ_i w_i·[e_i clean] + bonus(instruction)`.
///
/// The coin for each (sequence, item) pair is a keyed hash, so the validation
/// score is a deterministic function of the sequence.
#[derive(Debug, Clone)]
pub struct PlantedOracle {
    params: PlantedParams,
}

impl PlantedOracle {
    pub fn new(params: PlantedParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &PlantedParams {
        &self.params
    }

    /// Probability of a correct answer for the given member ids.
    pub fn success_probability(&self, ids: &[&str], instruction: Option<usize>) -> Result<f64> {
        if ids.len() > self.params.weights.len() {
            return Err(Error::OracleParams(format!(
                "{} weights for a sequence of length {}",
                self.params.weights.len(),
                ids.len()
            )));
        }
        let mut p: f64 = ids
            .iter()
            .zip(&self.params.weights)
            .filter(|(id, _)| self.params.clean.contains(**id))
            .map(|(_, w)| w)
            .sum();
        if let Some(i) = instruction {
            p += self.params.instruction_bonus.get(&i).copied().unwrap_or(0.0);
        }
        Ok(p.clamp(0.0, 1.0))
    }
}

impl Scorer for PlantedOracle {
    fn answer(&self, req: &ScoreRequest<'_>) -> Result<String> {
        let ids: Vec<&str> = req.exemplars.iter().map(|e| e.id.as_str()).collect();
        let p = self.success_probability(&ids, req.sequence.instruction())?;
        let instr = req
            .sequence
            .instruction()
            .map(|i| i as u64 + 1)
            .unwrap_or(0)
            .to_le_bytes();
        let mut parts: Vec<&[u8]> = vec![&instr];
        parts.extend(ids.iter().map(|s| s.as_bytes()));
        parts.push(b"|");
        parts.push(req.item.id.as_bytes());
        let u = keyed_unit(self.params.seed, &parts);
        Ok(if u < p {
            req.item.output.clone()
        } else {
            format!("not {}", req.item.output)
        })
    }

    fn describe(&self) -> String {
        "sim-planted".into()
    }
}

/// A rule-following stand-in: fits `y = a·x + b` by least squares when every
/// exemplar and the test input are numeric, otherwise answers with the most
/// frequent exemplar output (earliest on ties).
#[derive(Debug, Clone, Default)]
pub struct ExactRuleOracle;

impl ExactRuleOracle {
    fn linear_answer(xs: &[f64], ys: &[f64], x: f64) -> String {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let y = my + slope * (x - mx);
        format!("{}", y.round() as i64)
    }
}

impl Scorer for ExactRuleOracle {
    fn answer(&self, req: &ScoreRequest<'_>) -> Result<String> {
        let parse = |s: &str| s.trim().parse::<f64>().ok();
        let numeric: Option<Vec<(f64, f64)>> = req
            .exemplars
            .iter()
            .map(|e| Some((parse(&e.input)?, parse(&e.output)?)))
            .collect();
        if let (Some(pairs), Some(x)) = (numeric, parse(&req.item.input)) {
            let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            return Ok(Self::linear_answer(&xs, &ys, x));
        }
        let mut best: Option<(&str, usize)> = None;
        for e in &req.exemplars {
            let count = req.exemplars.iter().filter(|o| o.output == e.output).count();
            if best.map(|(_, c)| count > c).unwrap_or(true) {
                best = Some((e.output.as_str(), count));
            }
        }
        Ok(best.map(|(s, _)| s.to_string()).unwrap_or_default())
    }

    fn describe(&self) -> String {
        "sim-exactrule".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Exemplar, ExemplarPool, ExemplarSequence, ValidationSet};
    use crate::evaluate::validation_score;

    fn fixture() -> (ExemplarPool, ValidationSet) {
        let pool = ExemplarPool::new(
            (0..6)
                .map(|i| Exemplar::new(format!("{i}"), format!("x{i}"), format!("y{i}")))
                .collect(),
        )
        .unwrap();
        let val = ValidationSet::new(
            (0..40)
                .map(|i| Exemplar::new(format!("v{i}"), format!("q{i}"), format!("a{i}")))
                .collect(),
            &pool,
        )
        .unwrap();
        (pool, val)
    }

    fn planted(clean: &[&str], weights: &[f64]) -> PlantedOracle {
        PlantedOracle::new(PlantedParams {
            clean: clean.iter().map(|s| s.to_string()).collect(),
            weights: weights.to_vec(),
            instruction_bonus: BTreeMap::new(),
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn all_clean_scores_one_all_noisy_scores_zero() {
        let (pool, val) = fixture();
        let o = planted(&["0", "1", "2"], &[0.5, 0.3, 0.2]);
        let clean = ExemplarSequence::new(vec![0, 1, 2], None).unwrap();
        let noisy = ExemplarSequence::new(vec![3, 4, 5], None).unwrap();
        assert_eq!(validation_score(&clean, &pool, None, &val, &o, 1).unwrap(), 1.0);
        assert_eq!(validation_score(&noisy, &pool, None, &val, &o, 1).unwrap(), 0.0);
    }

    #[test]
    fn order_matters_for_half_clean_subsets() {
        let o = planted(&["0"], &[0.7, 0.3]);
        // Clean first: p = 0.7; clean second: p = 0.3.
        assert!((o.success_probability(&["0", "4"], None).unwrap() - 0.7).abs() < 1e-15);
        assert!((o.success_probability(&["4", "0"], None).unwrap() - 0.3).abs() < 1e-15);

        let (pool, val) = fixture();
        let a = ExemplarSequence::new(vec![0, 4], None).unwrap();
        let b = ExemplarSequence::new(vec![4, 0], None).unwrap();
        let sa = validation_score(&a, &pool, None, &val, &o, 1).unwrap();
        let sb = validation_score(&b, &pool, None, &val, &o, 1).unwrap();
        assert_ne!(sa, sb);
        assert!(sa > sb);
    }

    #[test]
    fn planted_scores_are_reproducible() {
        let (pool, val) = fixture();
        let o = planted(&["0", "2"], &[0.5, 0.3, 0.2]);
        let s = ExemplarSequence::new(vec![2, 5, 0], None).unwrap();
        let a = validation_score(&s, &pool, None, &val, &o, 1).unwrap();
        let b = validation_score(&s, &pool, None, &val, &o, 4).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn instruction_bonus_is_added_and_clamped() {
        let mut params = planted(&["0"], &[0.6, 0.4]).params().clone();
        params.instruction_bonus.insert(1, 0.3);
        let o = PlantedOracle::new(params).unwrap();
        assert!((o.success_probability(&["0", "3"], Some(1)).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(o.success_probability(&["0", "3"], Some(0)).unwrap(), 0.6);
        let mut p2 = o.params().clone();
        p2.clean.insert("3".into());
        let o2 = PlantedOracle::new(p2).unwrap();
        assert_eq!(o2.success_probability(&["0", "3"], Some(1)).unwrap(), 1.0);
    }

    #[test]
    fn malformed_params_rejected() {
        let bad = PlantedParams {
            clean: BTreeSet::new(),
            weights: vec![0.1, 0.5],
            instruction_bonus: BTreeMap::new(),
            seed: 0,
        };
        assert!(matches!(PlantedOracle::new(bad), Err(Error::OracleParams(_))));
        let o = planted(&[], &[1.0]);
        assert!(o.success_probability(&["a", "b"], None).is_err());
    }

    #[test]
    fn default_weights_are_decreasing_and_normalized() {
        assert_eq!(default_weights(5), DEFAULT_WEIGHTS_K5.to_vec());
        for k in 1..8 {
            let w = default_weights(k);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.windows(2).all(|p| p[0] >= p[1]));
        }
    }

    #[test]
    fn exact_rule_fits_lines_and_votes_labels() {
        let pool = ExemplarPool::new(vec![
            Exemplar::new("0", "1", "2"),
            Exemplar::new("1", "3", "-6"),
            Exemplar::new("2", "cat", "animal"),
            Exemplar::new("3", "dog", "animal"),
            Exemplar::new("4", "oak", "plant"),
        ])
        .unwrap();
        let lr = ValidationSet::new(vec![Exemplar::new("v", "5", "-14")], &pool).unwrap();
        let seq = ExemplarSequence::new(vec![0, 1], None).unwrap();
        assert_eq!(validation_score(&seq, &pool, None, &lr, &ExactRuleOracle, 1).unwrap(), 1.0);

        let cls = ValidationSet::new(vec![Exemplar::new("w", "cow", "animal")], &pool).unwrap();
        let seq = ExemplarSequence::new(vec![4, 2, 3], None).unwrap();
        assert_eq!(validation_score(&seq, &pool, None, &cls, &ExactRuleOracle, 1).unwrap(), 1.0);
    }
}
