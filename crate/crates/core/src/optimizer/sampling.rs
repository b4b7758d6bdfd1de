//! Random draws over the sequence space Ω.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::domain::{ExemplarSequence, InstructionSet};
use crate::error::{Error, Result};

/// Redraws allowed per slot before sampling stops short.
pub const MAX_REDRAWS: usize = 100;

/// Allowed sequence lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthRule {
    Fixed(usize),
    /// Uniform in `[1, k_max]`.
    Range(usize),
}

impl LengthRule {
    pub fn max_len(self) -> usize {
        match self {
            LengthRule::Fixed(k) | LengthRule::Range(k) => k,
        }
    }

    fn draw_len(self, rng: &mut impl Rng) -> usize {
        match self {
            LengthRule::Fixed(k) => k,
            LengthRule::Range(k) => rng.gen_range(1..=k),
        }
    }

    pub fn admits(self, len: usize) -> bool {
        match self {
            LengthRule::Fixed(k) => len == k,
            LengthRule::Range(k) => (1..=k).contains(&len),
        }
    }
}

/// n!/(n−k)!, saturating.
pub fn permutations(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128))
}

/// |Ω| for a pool of `n` under `rule`.
pub fn space_size(n: usize, rule: LengthRule) -> u128 {
    match rule {
        LengthRule::Fixed(k) => permutations(n, k),
        LengthRule::Range(k) => (1..=k).fold(0u128, |acc, l| acc.saturating_add(permutations(n, l))),
    }
}

fn check(n: usize, rule: LengthRule) -> Result<()> {
    let k = rule.max_len();
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::Config(format!("k = {k} exceeds pool size {n}")));
    }
    Ok(())
}

/// One ordered selection without replacement, uniform over Ω for `rule`'s length.
pub fn draw_sequence(n: usize, rule: LengthRule, rng: &mut impl Rng) -> Result<Vec<usize>> {
    check(n, rule)?;
    let len = rule.draw_len(rng);
    let mut picked = Vec::with_capacity(len);
    while picked.len() < len {
        let c = rng.gen_range(0..n);
        if !picked.contains(&c) {
            picked.push(c);
        }
    }
    Ok(picked)
}

fn enumerate(n: usize, len: usize, prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<ExemplarSequence>) {
    if prefix.len() == len {
        out.push(ExemplarSequence::new(prefix.clone(), None).expect("distinct by construction"));
        return;
    }
    for i in 0..n {
        if !used[i] {
            used[i] = true;
            prefix.push(i);
            enumerate(n, len, prefix, used, out);
            prefix.pop();
            used[i] = false;
        }
    }
}

/// Every sequence of Ω in lexicographic order.
pub fn enumerate_space(n: usize, rule: LengthRule) -> Result<Vec<ExemplarSequence>> {
    check(n, rule)?;
    let lens: Vec<usize> = match rule {
        LengthRule::Fixed(k) => vec![k],
        LengthRule::Range(k) => (1..=k).collect(),
    };
    let mut out = Vec::new();
    for len in lens {
        enumerate(n, len, &mut Vec::with_capacity(len), &mut vec![false; n], &mut out);
    }
    Ok(out)
}

/// Q_t: up to `q` distinct sequences drawn uniformly from Ω.
///
/// When Ω has at most `q` members it is enumerated and shuffled, so every
/// member appears. Otherwise sequences are drawn one by one; a slot that sees
/// [`MAX_REDRAWS`] duplicates in a row ends sampling early.
pub fn sample_domain(n: usize, rule: LengthRule, q: usize, rng: &mut impl Rng) -> Result<Vec<ExemplarSequence>> {
    check(n, rule)?;
    if q == 0 {
        return Err(Error::Config("q must be at least 1".into()));
    }
    if space_size(n, rule) <= q as u128 {
        let mut all = enumerate_space(n, rule)?;
        all.shuffle(rng);
        return Ok(all);
    }
    let mut seen = HashSet::with_capacity(q);
    let mut out = Vec::with_capacity(q);
    'slots: for _ in 0..q {
        for _ in 0..MAX_REDRAWS {
            let seq = ExemplarSequence::new(draw_sequence(n, rule, rng)?, None)?;
            if seen.insert(seq.clone()) {
                out.push(seq);
                continue 'slots;
            }
        }
        break;
    }
    Ok(out)
}

/// A uniformly drawn sequence over `universe` (pool positions), paired with a
/// uniform instruction when `instructions` is given. With `dedup`, members of
/// `seen` are redrawn; gives up after a bounded number of attempts.
pub fn draw_unseen(
    universe: &[usize],
    rule: LengthRule,
    instructions: Option<&InstructionSet>,
    seen: &HashSet<ExemplarSequence>,
    dedup: bool,
    rng: &mut impl Rng,
) -> Result<ExemplarSequence> {
    for _ in 0..MAX_REDRAWS * 10 {
        let exemplars = draw_sequence(universe.len(), rule, rng)?
            .into_iter()
            .map(|i| universe[i])
            .collect();
        let instruction = match instructions {
            Some(p) if !p.is_empty() => Some(rng.gen_range(0..p.len())),
            _ => None,
        };
        let seq = ExemplarSequence::new(exemplars, instruction)?;
        if !dedup || !seen.contains(&seq) {
            return Ok(seq);
        }
    }
    Err(Error::EmptyCandidates)
}

/// P × Q_t′ with practical subsampling.
///
/// `m = round(r·|P|)` instructions (at least one, at most |P|) are drawn per
/// sequence; the first ⌈q′/m⌉ filtered sequences are used and the result is
/// truncated to `q_prime`.
pub fn augment_with_instructions(
    filtered: &[ExemplarSequence],
    instructions: &InstructionSet,
    r: f64,
    q_prime: usize,
    rng: &mut impl Rng,
) -> Result<Vec<ExemplarSequence>> {
    if instructions.is_empty() {
        return Err(Error::EmptyInstructions);
    }
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Config(format!("instruction ratio must be positive, got {r}")));
    }
    let p = instructions.len();
    let m = ((r * p as f64).round() as usize).clamp(1, p);
    let keep = q_prime.div_ceil(m);
    let mut out = Vec::with_capacity(q_prime);
    for seq in filtered.iter().take(keep) {
        let picks: Vec<usize> = if m == p {
            (0..p).collect()
        } else {
            rand::seq::index::sample(rng, p, m).into_vec()
        };
        for i in picks {
            out.push(seq.with_instruction(Some(i)));
        }
    }
    out.truncate(q_prime);
    Ok(out)
}

/// Replaces one uniformly chosen position with a uniformly chosen non-member.
pub fn mutate(parent: &ExemplarSequence, n: usize, rng: &mut impl Rng) -> Result<ExemplarSequence> {
    if parent.len() >= n {
        return Err(Error::Config(format!(
            "cannot mutate: all {n} exemplars are already members"
        )));
    }
    let pos = rng.gen_range(0..parent.len());
    let members = parent.exemplars();
    let mut replacement = rng.gen_range(0..n - members.len());
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    // Map the draw onto the complement of the member set.
    for &m in &sorted {
        if replacement >= m {
            replacement += 1;
        }
    }
    let mut child = members.to_vec();
    child[pos] = replacement;
    ExemplarSequence::new(child, parent.instruction())
}
