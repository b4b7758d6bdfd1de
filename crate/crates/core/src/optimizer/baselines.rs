//! Best-of-N, Evo, OT-metric selection, and cosine retrieve-then-sample.

use super::retrieval::rank_by_mean_cosine;
use super::sampling::{draw_unseen, mutate, sample_domain, MAX_REDRAWS};
use super::{EvalInfo, Evaluator, Observer, Polarity, Problem, RunConfig, RunOutcome};
use crate::domain::{best_observation, History, InstructionSet};
use crate::embed::precompute_pool_embeddings;
use crate::error::Result;
use crate::otfilter::OtIndex;
use crate::rng;

/// Evaluates `count` uniform random sequences over `universe`.
///
/// Draws come from one sequential `init` stream, so a run that stops after
/// `T_init` draws evaluates exactly the first `T_init` sequences Best-of-N would.
pub(crate) fn random_phase(
    eval: &mut Evaluator<'_, '_>,
    config: &RunConfig,
    instructions: Option<&InstructionSet>,
    universe: &[usize],
    count: usize,
) -> Result<()> {
    let mut r = rng::stream(config.seed, rng::INIT, 0);
    for _ in 0..count {
        let seq = draw_unseen(
            universe,
            config.length_rule(),
            instructions,
            eval.seen(),
            config.dedup_history,
            &mut r,
        )?;
        eval.evaluate(seq, EvalInfo::default())?;
    }
    Ok(())
}

/// T uniform random sequences, deduplicated against the history.
pub fn run_best_of_n(
    config: &RunConfig,
    problem: Problem<'_>,
    prefix: &History,
    observer: &mut dyn Observer,
) -> Result<RunOutcome> {
    config.validate_for(problem.pool.len(), problem.instructions)?;
    let mut eval = Evaluator::new(config, problem, prefix, observer);
    let universe: Vec<usize> = (0..problem.pool.len()).collect();
    random_phase(&mut eval, config, config.instructions(&problem), &universe, config.budget)?;
    eval.finish()
}

/// Hill climbing: mutate one position of the incumbent best per iteration.
pub fn run_evo(
    config: &RunConfig,
    problem: Problem<'_>,
    prefix: &History,
    observer: &mut dyn Observer,
) -> Result<RunOutcome> {
    config.validate_for(problem.pool.len(), problem.instructions)?;
    let instructions = config.instructions(&problem);
    let n = problem.pool.len();
    let universe: Vec<usize> = (0..n).collect();
    let mut eval = Evaluator::new(config, problem, prefix, observer);
    random_phase(&mut eval, config, instructions, &universe, 1)?;
    for t in 1..config.budget {
        let parent = best_observation(eval.history())?.sequence.clone();
        let mut r = rng::stream(config.seed, rng::EVO, t as u64);
        let mut child = None;
        if parent.len() < n {
            for _ in 0..MAX_REDRAWS {
                let c = mutate(&parent, n, &mut r)?;
                if !config.dedup_history || !eval.seen().contains(&c) {
                    child = Some(c);
                    break;
                }
            }
        }
        // Every single-position neighbour already evaluated: fall back to a fresh random draw.
        let child = match child {
            Some(c) => c,
            None => draw_unseen(&universe, config.length_rule(), instructions, eval.seen(), config.dedup_history, &mut r)?,
        };
        eval.evaluate(child, EvalInfo::default())?;
    }
    eval.finish()
}

/// Ranks q sampled candidates by OT distance to the validation measure under
/// `config.polarity` and evaluates the top T in rank order.
pub fn run_ot_metric(
    config: &RunConfig,
    problem: Problem<'_>,
    prefix: &History,
    observer: &mut dyn Observer,
) -> Result<RunOutcome> {
    config.validate_for(problem.pool.len(), problem.instructions)?;
    let instructions = config.instructions(&problem);
    let table = precompute_pool_embeddings(problem.embedder, problem.pool, problem.validation)?;
    let index = OtIndex::new(&table, config.ot_solver)?;
    let mut r = rng::stream(config.seed, rng::DOMAIN, 0);
    let mut candidates = sample_domain(problem.pool.len(), config.length_rule(), config.q, &mut r)?;
    if let Some(p) = instructions {
        let mut ir = rng::stream(config.seed, rng::INSTRUCTIONS, 0);
        candidates = candidates
            .into_iter()
            .map(|c| {
                use rand::Rng;
                c.with_instruction(Some(ir.gen_range(0..p.len())))
            })
            .collect();
    }
    let ranked = index.rank(&candidates, config.polarity == Polarity::Max)?;
    let mut eval = Evaluator::new(config, problem, prefix, observer);
    for (i, d) in ranked.into_iter().take(config.budget) {
        eval.evaluate(candidates[i].clone(), EvalInfo { ot_distance: Some(d) })?;
    }
    // q < T: top up with random unseen sequences.
    let universe: Vec<usize> = (0..problem.pool.len()).collect();
    while eval.history().len() < config.budget {
        let s = draw_unseen(&universe, config.length_rule(), instructions, eval.seen(), config.dedup_history, &mut r)?;
        let d = index.distance(&s)?;
        eval.evaluate(s, EvalInfo { ot_distance: Some(d) })?;
    }
    eval.finish()
}

/// Keeps the R pool exemplars with the highest mean cosine similarity to the
/// validation set, then evaluates T uniform random sequences over them.
pub fn cosine_retrieve_then_sample(
    config: &RunConfig,
    problem: Problem<'_>,
    prefix: &History,
    observer: &mut dyn Observer,
) -> Result<RunOutcome> {
    config.validate_for(problem.pool.len(), problem.instructions)?;
    let table = precompute_pool_embeddings(problem.embedder, problem.pool, problem.validation)?;
    let mut universe: Vec<usize> = rank_by_mean_cosine(&table)?
        .into_iter()
        .take(config.retrieval_r)
        .map(|(i, _)| i)
        .collect();
    universe.sort_unstable();
    let mut eval = Evaluator::new(config, problem, prefix, observer);
    random_phase(&mut eval, config, config.instructions(&problem), &universe, config.budget)?;
    eval.finish()
}
