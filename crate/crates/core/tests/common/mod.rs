//! Shared fixtures for integration tests: planted tasks and exhaustive optima.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use exsel::evaluate::{validation_score, PlantedOracle, PlantedParams};
use exsel::optimizer::sampling::enumerate_space;
use exsel::optimizer::LengthRule;
use exsel::taskgen::{gen_lr, inject_noise, split, LrSpec, NoiseMode, NoiseSpec};
use exsel::{ExemplarPool, InstructionSet, ValidationSet};

pub struct Planted {
    pub pool: ExemplarPool,
    pub validation: ValidationSet,
    pub clean: BTreeSet<String>,
}

/// An LR task with `n` pool exemplars of which `clean` keep the true rule
/// (`y = -4x + 6`); the rest follow `y = 5x - 8` and are tagged noisy.
pub fn planted_lr(n: usize, clean: usize, validation: usize, seed: u64) -> Planted {
    let all = gen_lr(&LrSpec {
        n: n + validation,
        seed,
        ..LrSpec::default()
    })
    .unwrap();
    let (pool, validation) = split(&all, validation, seed).unwrap();
    let pool = inject_noise(
        &pool,
        &NoiseSpec {
            ratio: (n - clean) as f64 / n as f64,
            mode: NoiseMode::LrStructured,
            seed,
        },
    )
    .unwrap();
    let clean: BTreeSet<String> = pool.iter().filter(|e| !e.is_noisy()).map(|e| e.id.clone()).collect();
    Planted {
        pool,
        validation,
        clean,
    }
}

pub fn oracle(clean: &BTreeSet<String>, weights: Vec<f64>, bonus: BTreeMap<usize, f64>, seed: u64) -> PlantedOracle {
    PlantedOracle::new(PlantedParams {
        clean: clean.clone(),
        weights,
        instruction_bonus: bonus,
        seed,
    })
    .unwrap()
}

/// Maximum of s_V over every sequence of length k (times every instruction when given).
pub fn exhaustive_optimum(
    pool: &ExemplarPool,
    validation: &ValidationSet,
    instructions: Option<&InstructionSet>,
    scorer: &PlantedOracle,
    k: usize,
) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let instr: Vec<Option<usize>> = match instructions {
        Some(p) => (0..p.len()).map(Some).collect(),
        None => vec![None],
    };
    for seq in enumerate_space(pool.len(), LengthRule::Fixed(k)).unwrap() {
        for &i in &instr {
            let s = validation_score(&seq.with_instruction(i), pool, instructions, validation, scorer, 1).unwrap();
            best = best.max(s);
        }
    }
    best
}

const WORDS: [&str; 24] = [
    "river", "stone", "quiet", "market", "yellow", "window", "garden", "silver", "engine", "forest", "letter",
    "planet", "shadow", "coffee", "winter", "bridge", "candle", "pocket", "orange", "summer", "travel", "mirror",
    "button", "island",
];

/// A large pool: `lr` linear-regression exemplars (of which `clean` keep the
/// true rule) plus word-sentence distractors whose text shares little with
/// the numeric validation items. Distractors are tagged noisy.
pub fn retrieval_pool(total: usize, lr: usize, clean: usize, validation: usize, seed: u64) -> Planted {
    use exsel::taskgen::{lp_sentence, VowelSuffix};
    use exsel::Exemplar;
    use rand::seq::SliceRandom;
    use rand::Rng;
    let base = planted_lr(lr, clean, validation, seed);
    let mut r = exsel::rng::stream(seed, "distractors", 0);
    let mut exemplars: Vec<Exemplar> = base.pool.exemplars().to_vec();
    for i in 0..total - lr {
        let len = r.gen_range(3..7);
        let sentence: Vec<&str> = (0..len).map(|_| *WORDS.choose(&mut r).unwrap()).collect();
        let input = sentence.join(" ");
        exemplars.push(
            Exemplar::new(format!("d{i}"), input.clone(), lp_sentence(&input, VowelSuffix::Ay)).with_meta("noise", "true"),
        );
    }
    exemplars.shuffle(&mut r);
    let pool = ExemplarPool::new(exemplars).unwrap();
    let validation = ValidationSet::new(base.validation.items().to_vec(), &pool).unwrap();
    Planted {
        pool,
        validation,
        clean: base.clean,
    }
}
