//! The EASE loop and the baseline search strategies.

pub mod baselines;
pub mod ease;
pub mod retrieval;
pub mod sampling;

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::domain::{best_observation, ExemplarPool, ExemplarSequence, History, InstructionSet, Observation, ValidationSet};
use crate::embed::{Embedder, EmbeddingMode};
use crate::error::{Error, Result};
use crate::evaluate::{validation_score, Scorer};
use crate::otfilter::OtSolver;
use crate::surrogate::SurrogateSpec;

pub use baselines::{cosine_retrieve_then_sample, run_best_of_n, run_evo, run_ot_metric};
pub use ease::{run_ease, EaseLoop, StepReport};
pub use retrieval::{rank_by_mean_cosine, retrieval_prefilter};
pub use sampling::{augment_with_instructions, mutate, sample_domain, LengthRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    #[default]
    Ease,
    BestOfN,
    Evo,
    OtMetric,
    CosineRetrieval,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Ease => "ease",
            Strategy::BestOfN => "best-of-n",
            Strategy::Evo => "evo",
            Strategy::OtMetric => "ot-metric",
            Strategy::CosineRetrieval => "cosine-retrieval",
        }
    }
}

/// Whether the OT-metric baseline prefers the smallest or the largest distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    #[default]
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Exemplars per prompt.
    pub k: usize,
    /// Total black-box evaluations T.
    pub budget: usize,
    /// Random warm-up evaluations before the surrogate takes over.
    pub t_init: usize,
    /// Domain sample size per iteration.
    pub q: usize,
    /// Candidates kept after OT filtering.
    pub q_prime: usize,
    /// Exploration weight ν.
    pub nu: f64,
    pub seed: u64,
    pub strategy: Strategy,
    pub joint_instructions: bool,
    /// Instruction pairing factor r.
    pub instruction_ratio: f64,
    pub embedding_mode: EmbeddingMode,
    /// Sample sequence lengths uniformly in `[1, k_max]` instead of fixing `k`.
    pub k_range: bool,
    pub k_max: Option<usize>,
    /// Never evaluate the same sequence twice in one run.
    pub dedup_history: bool,
    pub polarity: Polarity,
    /// Pool exemplars kept by the cosine-retrieval baseline.
    pub retrieval_r: usize,
    /// Nearest pool exemplars kept per validation item before the run; off when absent.
    pub prefilter_m: Option<usize>,
    /// Skip OT filtering and keep the first q′ sampled candidates.
    pub disable_ot: bool,
    pub ot_solver: OtSolver,
    pub surrogate: SurrogateSpec,
    /// Concurrent black-box calls within one validation score.
    pub concurrency: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: 5,
            budget: 165,
            t_init: 10,
            q: 50_000,
            q_prime: 200,
            nu: 0.01,
            seed: 0,
            strategy: Strategy::Ease,
            joint_instructions: false,
            instruction_ratio: 1.0,
            embedding_mode: EmbeddingMode::OrderedText,
            k_range: false,
            k_max: None,
            dedup_history: true,
            polarity: Polarity::Min,
            retrieval_r: 10,
            prefilter_m: None,
            disable_ot: false,
            ot_solver: OtSolver::Exact,
            surrogate: SurrogateSpec::default(),
            concurrency: 8,
        }
    }
}

impl RunConfig {
    pub fn length_rule(&self) -> LengthRule {
        if self.k_range {
            LengthRule::Range(self.k_max.unwrap_or(self.k))
        } else {
            LengthRule::Fixed(self.k)
        }
    }

    /// Checks the config on its own; pool-dependent checks happen in [`RunConfig::validate_for`].
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.length_rule().max_len() == 0 {
            return bad("k must be at least 1".into());
        }
        if self.budget == 0 {
            return bad("budget must be at least 1".into());
        }
        if self.t_init == 0 || self.t_init > self.budget {
            return bad(format!("t_init must be in [1, budget], got {}", self.t_init));
        }
        if self.q == 0 || self.q_prime == 0 || self.q_prime > self.q {
            return bad(format!("need 1 <= q' <= q, got q={} q'={}", self.q, self.q_prime));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return bad(format!("nu must be >= 0, got {}", self.nu));
        }
        if !(self.instruction_ratio.is_finite() && self.instruction_ratio > 0.0) {
            return bad("instruction_ratio must be positive".into());
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        if self.prefilter_m == Some(0) {
            return bad("prefilter_m must be at least 1".into());
        }
        if self.strategy == Strategy::CosineRetrieval && self.retrieval_r < self.length_rule().max_len() {
            return bad(format!(
                "retrieval_r = {} is smaller than k = {}",
                self.retrieval_r,
                self.length_rule().max_len()
            ));
        }
        self.surrogate.validate()
    }

    /// Checks that the run can complete on this problem.
    pub fn validate_for(&self, pool_len: usize, instructions: Option<&InstructionSet>) -> Result<()> {
        self.validate()?;
        let k = self.length_rule().max_len();
        if k > pool_len {
            return Err(Error::Config(format!("k = {k} exceeds pool size {pool_len}")));
        }
        if self.joint_instructions && instructions.map_or(true, InstructionSet::is_empty) {
            return Err(Error::EmptyInstructions);
        }
        if self.dedup_history {
            let n = match self.strategy {
                Strategy::CosineRetrieval => self.retrieval_r.min(pool_len),
                _ => pool_len,
            };
            let mut space = sampling::space_size(n, self.length_rule());
            if self.joint_instructions {
                space = space.saturating_mul(instructions.map_or(1, |p| p.len()) as u128);
            }
            if (self.budget as u128) > space {
                return Err(Error::Config(format!(
                    "budget {} exceeds the {space} distinct sequences available",
                    self.budget
                )));
            }
        }
        Ok(())
    }

    fn instructions<'a>(&self, problem: &Problem<'a>) -> Option<&'a InstructionSet> {
        if self.joint_instructions {
            problem.instructions
        } else {
            None
        }
    }
}

/// Everything a strategy needs besides its config.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub pool: &'a ExemplarPool,
    pub validation: &'a ValidationSet,
    pub instructions: Option<&'a InstructionSet>,
    pub scorer: &'a dyn Scorer,
    pub embedder: &'a Embedder,
}

/// Per-evaluation extras recorded alongside the observation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalInfo {
    pub ot_distance: Option<f64>,
}

/// Receives each new observation as soon as it is scored.
pub trait Observer {
    fn observe(&mut self, obs: &Observation, info: &EvalInfo) -> Result<()>;
}

impl Observer for () {
    fn observe(&mut self, _: &Observation, _: &EvalInfo) -> Result<()> {
        Ok(())
    }
}

impl<F: FnMut(&Observation, &EvalInfo) -> Result<()>> Observer for F {
    fn observe(&mut self, obs: &Observation, info: &EvalInfo) -> Result<()> {
        self(obs, info)
    }
}

/// Issues black-box evaluations and keeps the history.
///
/// A replay prefix (from a ledger) is consumed first: the strategy re-derives
/// each choice, the evaluator checks it against the recorded sequence and
/// returns the recorded score without calling the scorer.
pub struct Evaluator<'a, 'o> {
    problem: Problem<'a>,
    instructions: Option<&'a InstructionSet>,
    concurrency: usize,
    replay: VecDeque<Observation>,
    observer: &'o mut dyn Observer,
    history: History,
    seen: HashSet<ExemplarSequence>,
    infos: Vec<EvalInfo>,
    calls: usize,
}

impl<'a, 'o> Evaluator<'a, 'o> {
    pub fn new(
        config: &RunConfig,
        problem: Problem<'a>,
        replay: &History,
        observer: &'o mut dyn Observer,
    ) -> Self {
        Self {
            problem,
            instructions: config.instructions(&problem),
            concurrency: config.concurrency,
            replay: replay.observations().iter().cloned().collect(),
            observer,
            history: History::new(),
            seen: HashSet::new(),
            infos: Vec::new(),
            calls: 0,
        }
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    /// Every sequence evaluated so far.
    pub fn seen(&self) -> &HashSet<ExemplarSequence> {
        &self.seen
    }

    /// Black-box calls made by this evaluator (replayed records excluded).
    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn evaluate(&mut self, sequence: ExemplarSequence, info: EvalInfo) -> Result<&Observation> {
        let iteration = self.history.len();
        let obs = if let Some(recorded) = self.replay.pop_front() {
            if recorded.iteration != iteration || recorded.sequence != sequence {
                return Err(Error::Resume(format!(
                    "ledger diverges from the run at iteration {iteration}"
                )));
            }
            recorded
        } else {
            let score = validation_score(
                &sequence,
                self.problem.pool,
                self.instructions,
                self.problem.validation,
                self.problem.scorer,
                self.concurrency,
            )?;
            self.calls += 1;
            let obs = Observation::new(sequence, score, iteration)?;
            self.observer.observe(&obs, &info)?;
            obs
        };
        self.seen.insert(obs.sequence.clone());
        self.history.push(obs)?;
        self.infos.push(info);
        Ok(self.history.observations().last().unwrap())
    }

    fn finish(self) -> Result<RunOutcome> {
        if !self.replay.is_empty() {
            return Err(Error::Resume(format!(
                "ledger holds {} more records than the run produced",
                self.replay.len()
            )));
        }
        let best = best_observation(&self.history)?.clone();
        Ok(RunOutcome {
            best,
            history: self.history,
            infos: self.infos,
            calls: self.calls,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub best: Observation,
    pub history: History,
    pub infos: Vec<EvalInfo>,
    /// Black-box evaluations issued in this process (excludes replayed ones).
    pub calls: usize,
}

/// Runs the configured strategy to exactly `config.budget` evaluations,
/// replaying `prefix` first.
pub fn run(
    config: &RunConfig,
    problem: Problem<'_>,
    prefix: &History,
    observer: &mut dyn Observer,
) -> Result<RunOutcome> {
    match config.strategy {
        Strategy::Ease => run_ease(config, problem, prefix, observer),
        Strategy::BestOfN => run_best_of_n(config, problem, prefix, observer),
        Strategy::Evo => run_evo(config, problem, prefix, observer),
        Strategy::OtMetric => run_ot_metric(config, problem, prefix, observer),
        Strategy::CosineRetrieval => cosine_retrieve_then_sample(config, problem, prefix, observer),
    }
}

/// Applies the retrieval pre-filter when `config.prefilter_m` is set; otherwise
/// returns the pool unchanged.
pub fn prepare_pool(config: &RunConfig, problem: Problem<'_>) -> Result<ExemplarPool> {
    match config.prefilter_m {
        None => Ok(problem.pool.clone()),
        Some(m) => {
            let table = crate::embed::precompute_pool_embeddings(problem.embedder, problem.pool, problem.validation)?;
            let keep = retrieval_prefilter(&table, m)?;
            problem.pool.subset(&keep)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let c = RunConfig::default();
        assert_eq!((c.k, c.budget, c.t_init, c.q, c.q_prime), (5, 165, 10, 50_000, 200));
        assert_eq!(c.nu, 0.01);
        assert!(c.dedup_history);
        c.validate().unwrap();
        for bad in [
            RunConfig { t_init: 0, ..RunConfig::default() },
            RunConfig { t_init: 166, ..RunConfig::default() },
            RunConfig { q_prime: 50_001, ..RunConfig::default() },
            RunConfig { nu: -0.1, ..RunConfig::default() },
            RunConfig { k: 0, ..RunConfig::default() },
            RunConfig { strategy: Strategy::CosineRetrieval, retrieval_r: 3, ..RunConfig::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn budget_must_fit_the_space() {
        let c = RunConfig { k: 2, budget: 13, t_init: 2, ..RunConfig::default() };
        assert!(c.validate_for(4, None).is_err());
        let c = RunConfig { budget: 12, ..c };
        c.validate_for(4, None).unwrap();
        assert!(c.validate_for(1, None).is_err());
        let joint = RunConfig { joint_instructions: true, ..c };
        assert!(matches!(joint.validate_for(4, None), Err(Error::EmptyInstructions)));
    }

    #[test]
    fn config_json_roundtrip_and_unknown_keys() {
        let c = RunConfig { seed: 9, strategy: Strategy::Evo, ..RunConfig::default() };
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
        let partial: RunConfig = serde_json::from_str(r#"{"k": 3, "strategy": "best-of-n"}"#).unwrap();
        assert_eq!(partial.k, 3);
        assert_eq!(partial.budget, 165);
        assert!(serde_json::from_str::<RunConfig>(r#"{"kk": 3}"#).is_err());
    }
}
