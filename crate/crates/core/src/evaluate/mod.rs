//! Prompt rendering, per-sample scoring, and the black-box validation score.

pub mod oracle;
pub mod remote;
pub mod template;

use serde::{Deserialize, Serialize};

use crate::domain::{mean_score, Exemplar, ExemplarPool, ExemplarSequence, InstructionSet, ValidationSet};
use crate::error::Result;

pub use oracle::{default_weights, ExactRuleOracle, PlantedOracle, PlantedParams};
pub use remote::{RemoteLlmScorer, RemoteLlmSpec};
pub use template::{render_block, render_context, render_prompt};

/// Everything a black-box answerer may look at for one validation item.
pub struct ScoreRequest<'a> {
    pub sequence: &'a ExemplarSequence,
    pub exemplars: Vec<&'a Exemplar>,
    pub prompt: &'a str,
    pub item: &'a Exemplar,
}

/// The black box f: returns the model's answer for one rendered prompt.
pub trait Scorer: Send + Sync {
    fn answer(&self, req: &ScoreRequest<'_>) -> Result<String>;

    fn describe(&self) -> String;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScorerSpec {
    RemoteLlm(RemoteLlmSpec),
    SimPlanted {
        /// Explicit clean ids; when absent, every pool exemplar not tagged noisy.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        clean: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        #[serde(default)]
        instruction_bonus: std::collections::BTreeMap<usize, f64>,
        #[serde(default)]
        seed: u64,
    },
    SimExactrule,
}

impl Default for ScorerSpec {
    fn default() -> Self {
        ScorerSpec::SimPlanted {
            clean: None,
            weights: None,
            instruction_bonus: Default::default(),
            seed: 0,
        }
    }
}

/// Lower-cases, trims, and collapses internal whitespace runs.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// 1 when the normalized answer equals the normalized gold label, else 0.
pub fn score_sample(model_output: &str, gold: &str) -> f64 {
    if normalize(model_output) == normalize(gold) {
        1.0
    } else {
        0.0
    }
}

/// s_V(E): mean match score over the validation set, one completion per item.
///
/// `concurrency > 1` fans items out over scoped threads in chunks; the result
/// does not depend on completion order.
pub fn validation_score(
    sequence: &ExemplarSequence,
    pool: &ExemplarPool,
    instructions: Option<&InstructionSet>,
    validation: &ValidationSet,
    scorer: &dyn Scorer,
    concurrency: usize,
) -> Result<f64> {
    let exemplars = sequence
        .exemplars()
        .iter()
        .map(|&p| pool.get(p))
        .collect::<Result<Vec<_>>>()?;
    let prompts = validation
        .items()
        .iter()
        .map(|item| render_prompt(sequence, pool, instructions, &item.input))
        .collect::<Result<Vec<_>>>()?;

    let score_one = |i: usize| -> Result<f64> {
        let item = &validation.items()[i];
        let req = ScoreRequest {
            sequence,
            exemplars: exemplars.clone(),
            prompt: &prompts[i],
            item,
        };
        Ok(score_sample(&scorer.answer(&req)?, &item.output))
    };

    let n = validation.len();
    let per_sample: Vec<f64> = if concurrency <= 1 {
        (0..n).map(score_one).collect::<Result<_>>()?
    } else {
        let mut out = Vec::with_capacity(n);
        let indices: Vec<usize> = (0..n).collect();
        for chunk in indices.chunks(concurrency) {
            let results: Vec<Result<f64>> = std::thread::scope(|s| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|&i| s.spawn(move || score_one(i)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("scorer thread panicked"))
                    .collect()
            });
            for r in results {
                out.push(r?);
            }
        }
        out
    };
    mean_score(&per_sample)
}
