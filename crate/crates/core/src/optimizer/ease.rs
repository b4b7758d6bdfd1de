//! The surrogate-guided loop: train on history, sample and OT-filter a
//! candidate domain, pick the NeuralUCB argmax, evaluate, repeat.

use rayon::prelude::*;

use super::baselines::random_phase;
use super::sampling::{augment_with_instructions, draw_unseen, sample_domain};
use super::{EvalInfo, Evaluator, Observer, Problem, RunConfig, RunOutcome};
use crate::domain::{ExemplarSequence, History, InstructionSet};
use crate::embed::{embed_sequences, precompute_pool_embeddings, EmbeddingTable};
use crate::error::{Error, Result};
use crate::otfilter::OtIndex;
use crate::rng;
use crate::surrogate::{train, SurrogateParams, UncertaintyState};

/// What one acquisition step saw and chose.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub iteration: usize,
    pub chosen: ExemplarSequence,
    pub predicted: f64,
    pub sigma: f64,
    pub acquisition: f64,
    pub train_mse: f64,
    /// |Q_t| after removing already-evaluated sequences.
    pub sampled: usize,
    /// Candidates scored by the acquisition function.
    pub candidates: usize,
    pub ot_distance: Option<f64>,
}

pub struct EaseLoop<'a, 'o> {
    config: RunConfig,
    problem: Problem<'a>,
    instructions: Option<&'a InstructionSet>,
    table: EmbeddingTable,
    ot: Option<OtIndex>,
    eval: Evaluator<'a, 'o>,
    params: Option<SurrogateParams>,
    uncertainty: Option<UncertaintyState>,
    /// Observations already folded into the uncertainty state.
    folded: usize,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if *v <= values[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

impl<'a, 'o> EaseLoop<'a, 'o> {
    pub fn new(
        config: &RunConfig,
        problem: Problem<'a>,
        prefix: &History,
        observer: &'o mut dyn Observer,
    ) -> Result<Self> {
        config.validate_for(problem.pool.len(), problem.instructions)?;
        let table = precompute_pool_embeddings(problem.embedder, problem.pool, problem.validation)?;
        let ot = if config.disable_ot {
            None
        } else {
            Some(OtIndex::new(&table, config.ot_solver)?)
        };
        Ok(Self {
            config: config.clone(),
            problem,
            instructions: config.instructions(&problem),
            table,
            ot,
            eval: Evaluator::new(config, problem, prefix, observer),
            params: None,
            uncertainty: None,
            folded: 0,
        })
    }

    pub fn history(&self) -> &History {
        self.eval.history()
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn surrogate(&self) -> Option<&SurrogateParams> {
        self.params.as_ref()
    }

    pub fn uncertainty_state(&self) -> Option<&UncertaintyState> {
        self.uncertainty.as_ref()
    }

    /// Evaluates the T_init random warm-up sequences.
    pub fn warm_up(&mut self) -> Result<()> {
        let universe: Vec<usize> = (0..self.problem.pool.len()).collect();
        let count = self
            .config
            .t_init
            .min(self.config.budget)
            .saturating_sub(self.history().len());
        random_phase(&mut self.eval, &self.config, self.instructions, &universe, count)
    }

    fn embed(&self, seqs: &[ExemplarSequence]) -> Result<Vec<crate::embed::EmbeddingVector>> {
        embed_sequences(
            self.problem.embedder,
            seqs,
            self.problem.pool,
            self.instructions,
            self.config.embedding_mode,
            Some(&self.table),
        )
    }

    /// Fits the surrogate to the current history and folds any not-yet-seen
    /// observations into the uncertainty state.
    pub fn fit(&mut self) -> Result<f64> {
        let history = self.eval.history();
        if history.is_empty() {
            return Err(Error::EmptyHistory);
        }
        let seqs: Vec<ExemplarSequence> = history.observations().iter().map(|o| o.sequence.clone()).collect();
        let embs = self.embed(&seqs)?;
        let inputs: Vec<&[f64]> = embs.iter().map(|e| e.values()).collect();
        let mut spec = self.config.surrogate.train.clone();
        spec.init_seed = self.config.seed;
        let start = if spec.warm_start { self.params.as_ref() } else { None };
        let outcome = train(&inputs, &history.scores(), &self.config.surrogate.hidden, &spec, start)?;
        let params = outcome.params;
        let state = match self.uncertainty.as_mut() {
            Some(s) => s,
            None => self
                .uncertainty
                .insert(UncertaintyState::new(params.feature_dim(), self.config.surrogate.lambda)?),
        };
        for e in &embs[self.folded..] {
            state.update(&params.gradient_features(e)?)?;
        }
        self.folded = embs.len();
        self.params = Some(params);
        Ok(outcome.mse)
    }

    /// Q_t′ (plus instructions in joint mode), with evaluated sequences removed.
    fn candidates(&self, t: usize) -> Result<(Vec<ExemplarSequence>, usize)> {
        let dedup = self.config.dedup_history;
        let seen = self.eval.seen();
        let mut rng = rng::stream(self.config.seed, rng::DOMAIN, t as u64);
        let mut domain = sample_domain(
            self.problem.pool.len(),
            self.config.length_rule(),
            self.config.q,
            &mut rng,
        )?;
        if dedup && self.instructions.is_none() {
            domain.retain(|s| !seen.contains(s));
        }
        let sampled = domain.len();
        let mut filtered = if domain.is_empty() {
            Vec::new()
        } else {
            match &self.ot {
                Some(ot) => ot.filter_top(&domain, self.config.q_prime)?,
                None => domain.into_iter().take(self.config.q_prime).collect(),
            }
        };
        if let Some(instructions) = self.instructions {
            let mut irng = rng::stream(self.config.seed, rng::INSTRUCTIONS, t as u64);
            filtered = augment_with_instructions(
                &filtered,
                instructions,
                self.config.instruction_ratio,
                self.config.q_prime,
                &mut irng,
            )?;
            if dedup {
                filtered.retain(|s| !seen.contains(s));
            }
        }
        if filtered.is_empty() {
            let universe: Vec<usize> = (0..self.problem.pool.len()).collect();
            filtered.push(draw_unseen(
                &universe,
                self.config.length_rule(),
                self.instructions,
                seen,
                dedup,
                &mut rng,
            )?);
        }
        Ok((filtered, sampled))
    }

    /// One acquisition iteration: fit, sample, filter, score candidates, evaluate the argmax.
    pub fn step(&mut self) -> Result<StepReport> {
        let t = self.history().len();
        if t < self.config.t_init.min(self.config.budget) {
            return Err(Error::Config(format!(
                "acquisition needs {} warm-up observations, history has {t}",
                self.config.t_init
            )));
        }
        let train_mse = self.fit()?;
        let (candidates, sampled) = self.candidates(t)?;
        let embs = self.embed(&candidates)?;
        let params = self.params.as_ref().expect("fitted above");
        let state = self.uncertainty.as_ref().expect("fitted above");
        let nu = self.config.nu;
        let scored = embs
            .par_iter()
            .map(|e| {
                let (mean, g) = params.forward_features(e.values())?;
                let sigma = state.uncertainty(&g)?;
                Ok((mean, sigma, mean + nu * sigma, g))
            })
            .collect::<Result<Vec<_>>>()?;
        let acq: Vec<f64> = scored.iter().map(|s| s.2).collect();
        let best = argmax(&acq).ok_or(Error::EmptyCandidates)?;
        let chosen = candidates[best].clone();
        let (predicted, sigma, acquisition, g) = scored[best].clone();
        let ot_distance = match &self.ot {
            Some(ot) => Some(ot.distance(&chosen)?),
            None => None,
        };
        self.eval.evaluate(chosen.clone(), EvalInfo { ot_distance })?;
        self.uncertainty.as_mut().expect("fitted above").update(&g)?;
        self.folded += 1;
        Ok(StepReport {
            iteration: t,
            chosen,
            predicted,
            sigma,
            acquisition,
            train_mse,
            sampled,
            candidates: candidates.len(),
            ot_distance,
        })
    }

    pub fn finish(self) -> Result<RunOutcome> {
        self.eval.finish()
    }
}

/// The full loop: T_init random evaluations, then acquisitions until the budget is spent.
pub fn run_ease(
    config: &RunConfig,
    problem: Problem<'_>,
    prefix: &History,
    observer: &mut dyn Observer,
) -> Result<RunOutcome> {
    let mut run = EaseLoop::new(config, problem, prefix, observer)?;
    run.warm_up()?;
    while run.history().len() < config.budget {
        run.step()?;
    }
    run.finish()
}
