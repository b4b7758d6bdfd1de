//! Synthetic task families and noise injection.

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Exemplar, ExemplarPool, ValidationSet};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSpec {
    pub a: i64,
    pub b: i64,
    pub n: usize,
    pub lo: i64,
    pub hi: i64,
    pub seed: u64,
}

impl Default for LrSpec {
    fn default() -> Self {
        Self {
            a: -4,
            b: 6,
            n: 100,
            lo: -200,
            hi: 200,
            seed: 0,
        }
    }
}

impl LrSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lo >= self.hi {
            return Err(Error::Config(format!("empty input range [{}, {}]", self.lo, self.hi)));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        let width = (self.hi - self.lo + 1) as u128;
        if (self.n as u128) > width {
            return Err(Error::Config(format!(
                "range [{}, {}] has fewer than {} integers",
                self.lo, self.hi, self.n
            )));
        }
        Ok(())
    }
}

/// `y = a·x + b` as decimal text.
pub fn lr_label(a: i64, b: i64, x: i64) -> String {
    (a * x + b).to_string()
}

/// `n` exemplars with distinct integer inputs drawn from `[lo, hi]`.
pub fn gen_lr(spec: &LrSpec) -> Result<ExemplarPool> {
    spec.validate()?;
    let width = (spec.hi - spec.lo + 1) as usize;
    let mut r = rng::stream(spec.seed, "taskgen-lr", 0);
    let picks = index::sample(&mut r, width, spec.n);
    let exemplars = picks
        .iter()
        .enumerate()
        .map(|(i, off)| {
            let x = spec.lo + off as i64;
            Exemplar::new(i.to_string(), x.to_string(), lr_label(spec.a, spec.b, x))
        })
        .collect();
    ExemplarPool::new(exemplars)
}

fn is_vowel(c: char) -> bool {
    matches!(c.to_ascii_lowercase(), 'a' | 'e' | 'i' | 'o' | 'u')
}

/// Vowel-initial suffix: the stated rule uses "ay"; `Yay` reproduces the
/// published example output ("Over" → "Overyay").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VowelSuffix {
    #[default]
    Ay,
    Yay,
}

/// Transforms one whitespace-free token; leading and trailing non-letters stay in place.
pub fn lp_word(token: &str, vowel_suffix: VowelSuffix) -> String {
    let chars: Vec<char> = token.chars().collect();
    let Some(start) = chars.iter().position(|c| c.is_alphabetic()) else {
        return token.to_string();
    };
    let end = chars[start..]
        .iter()
        .position(|c| !c.is_alphabetic())
        .map(|p| start + p)
        .unwrap_or(chars.len());
    let prefix: String = chars[..start].iter().collect();
    let word = &chars[start..end];
    let rest: String = chars[end..].iter().collect();

    let body = if is_vowel(word[0]) {
        let suffix = match vowel_suffix {
            VowelSuffix::Ay => "ay",
            VowelSuffix::Yay => "yay",
        };
        format!("{}{suffix}", word.iter().collect::<String>())
    } else {
        let cluster = word.iter().position(|&c| is_vowel(c)).unwrap_or(word.len());
        if cluster == word.len() {
            format!("{}ay", word.iter().collect::<String>())
        } else {
            let capitalized = word[0].is_uppercase();
            let moved: String = word[..cluster].iter().collect::<String>().to_lowercase();
            let mut head: String = word[cluster..].iter().collect();
            if capitalized {
                let mut cs = head.chars();
                let first = cs.next().unwrap();
                head = first.to_uppercase().chain(cs).collect();
            }
            format!("{head}{moved}ay")
        }
    };
    format!("{prefix}{body}{rest}")
}

/// Applies [`lp_word`] to every whitespace-separated token, keeping the spacing.
pub fn lp_sentence(sentence: &str, vowel_suffix: VowelSuffix) -> String {
    let mut out = String::with_capacity(sentence.len() + 16);
    let mut token = String::new();
    for c in sentence.chars() {
        if c.is_whitespace() {
            if !token.is_empty() {
                out.push_str(&lp_word(&token, vowel_suffix));
                token.clear();
            }
            out.push(c);
        } else {
            token.push(c);
        }
    }
    if !token.is_empty() {
        out.push_str(&lp_word(&token, vowel_suffix));
    }
    out
}

pub fn gen_lp_variant<S: AsRef<str>>(sentences: &[S], vowel_suffix: VowelSuffix) -> Result<ExemplarPool> {
    if sentences.is_empty() {
        return Err(Error::Config("no sentences given".into()));
    }
    let exemplars = sentences
        .iter()
        .enumerate()
        .map(|(i, s)| Exemplar::new(i.to_string(), s.as_ref(), lp_sentence(s.as_ref(), vowel_suffix)))
        .collect();
    ExemplarPool::new(exemplars)
}

pub const AGNEWS_LABELS: [&str; 4] = ["World", "Sports", "Business", "Sci/Tech"];

/// World → Sports → Business → Sci/Tech → World.
pub fn remap_agnews(label: &str) -> Result<&'static str> {
    let pos = AGNEWS_LABELS
        .iter()
        .position(|l| *l == label.trim())
        .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
    Ok(AGNEWS_LABELS[(pos + 1) % 4])
}

pub const SST5_LABELS: [&str; 5] = ["very positive", "positive", "neutral", "negative", "very negative"];

/// Mirrors the sentiment scale; "neutral" is fixed.
pub fn reverse_sst5(label: &str) -> Result<&'static str> {
    let pos = SST5_LABELS
        .iter()
        .position(|l| *l == label.trim())
        .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
    Ok(SST5_LABELS[4 - pos])
}

/// Relabels every exemplar's output through `map`.
pub fn relabel(pool: &ExemplarPool, map: impl Fn(&str) -> Result<&'static str>) -> Result<ExemplarPool> {
    let exemplars = pool
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e.output = map(&e.output)?.to_string();
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;
    ExemplarPool::new(exemplars)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Take the label of another randomly chosen exemplar.
    RandomLabel,
    /// Relabel with `y = 5x − 8`.
    LrStructured,
    /// Use the input text as the label.
    LpRepeatInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub ratio: f64,
    pub mode: NoiseMode,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(Error::Config(format!("noise ratio {} outside [0, 1]", self.ratio)));
        }
        Ok(())
    }
}

/// Relabels exactly `round(ratio·n)` uniformly chosen exemplars and tags them `noise=true`.
pub fn inject_noise(pool: &ExemplarPool, spec: &NoiseSpec) -> Result<ExemplarPool> {
    spec.validate()?;
    let n = pool.len();
    let count = ((spec.ratio * n as f64).round() as usize).min(n);
    let mut r = rng::stream(spec.seed, "taskgen-noise", 0);
    let chosen: BTreeSet<usize> = index::sample(&mut r, n, count).into_iter().collect();
    let originals: Vec<&str> = pool.iter().map(|e| e.output.as_str()).collect();
    let mut exemplars = pool.exemplars().to_vec();
    for &i in &chosen {
        let e = &mut exemplars[i];
        let new_output = match spec.mode {
            NoiseMode::RandomLabel => {
                if n < 2 {
                    return Err(Error::Config("random-label noise needs at least two exemplars".into()));
                }
                let mut donor = r.gen_range(0..n - 1);
                if donor >= i {
                    donor += 1;
                }
                originals[donor].to_string()
            }
            NoiseMode::LrStructured => {
                let x: i64 = e
                    .input
                    .trim()
                    .parse()
                    .map_err(|_| Error::NonNumeric(e.input.clone()))?;
                lr_label(5, -8, x)
            }
            NoiseMode::LpRepeatInput => e.input.clone(),
        };
        e.output = new_output;
        e.meta.insert("noise".into(), "true".into());
    }
    ExemplarPool::new(exemplars)
}

/// Splits generated exemplars into a pool and a disjoint validation set of
/// `validation_size` items, chosen uniformly. Ids are renumbered as
/// `"{i}"` in the pool and `"v{i}"` in the validation set.
pub fn split(all: &ExemplarPool, validation_size: usize, seed: u64) -> Result<(ExemplarPool, ValidationSet)> {
    if validation_size == 0 || validation_size >= all.len() {
        return Err(Error::Config(format!(
            "validation size {validation_size} must be in [1, {})",
            all.len()
        )));
    }
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.shuffle(&mut rng::stream(seed, "taskgen-split", 0));
    let mut val_idx = order[..validation_size].to_vec();
    let mut pool_idx = order[validation_size..].to_vec();
    val_idx.sort_unstable();
    pool_idx.sort_unstable();
    let pool = ExemplarPool::new(
        pool_idx
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let mut e = all.exemplars()[p].clone();
                e.id = i.to_string();
                e
            })
            .collect(),
    )?;
    let validation = val_idx
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut e = all.exemplars()[p].clone();
            e.id = format!("v{i}");
            e.meta.remove("noise");
            e
        })
        .collect();
    let validation = ValidationSet::new(validation, &pool)?;
    Ok((pool, validation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(a: i64, b: i64) -> LrSpec {
        LrSpec {
            a,
            b,
            n: 50,
            ..LrSpec::default()
        }
    }

    #[test]
    fn lr_labels() {
        assert_eq!(lr_label(-4, 6, 117), "-462");
        assert_eq!(lr_label(-4, 6, 0), "6");
        assert_eq!(lr_label(-4, 6, 172), "-682");
    }

    #[test]
    fn gen_lr_is_deterministic_and_exact() {
        let p = gen_lr(&spec(-4, 6)).unwrap();
        assert_eq!(p, gen_lr(&spec(-4, 6)).unwrap());
        let mut seen = BTreeSet::new();
        for e in p.iter() {
            let x: i64 = e.input.parse().unwrap();
            assert!((-200..=200).contains(&x));
            assert!(seen.insert(x));
            assert_eq!(e.output.parse::<i64>().unwrap(), -4 * x + 6);
        }
    }

    #[test]
    fn gen_lr_rejects_small_range() {
        let s = LrSpec {
            n: 5,
            lo: 0,
            hi: 3,
            ..LrSpec::default()
        };
        assert!(gen_lr(&s).is_err());
        let s = LrSpec {
            lo: 3,
            hi: 3,
            ..LrSpec::default()
        };
        assert!(gen_lr(&s).is_err());
    }

    #[test]
    fn lp_examples() {
        assert_eq!(lp_word("The", VowelSuffix::Ay), "Ethay");
        assert_eq!(lp_word("quick", VowelSuffix::Ay), "uickqay");
        assert_eq!(lp_word("apple", VowelSuffix::Ay), "appleay");
        assert_eq!(lp_word("Over", VowelSuffix::Ay), "Overay");
        assert_eq!(lp_word("Over", VowelSuffix::Yay), "Overyay");
        assert_eq!(lp_word("dog.", VowelSuffix::Ay), "ogday.");
        assert_eq!(lp_word("Brown", VowelSuffix::Ay), "Ownbray");
        assert_eq!(lp_word("yellow", VowelSuffix::Ay), "ellowyay");
        assert_eq!(lp_word("42", VowelSuffix::Ay), "42");
        assert_eq!(
            lp_sentence("The quick brown fox", VowelSuffix::Ay),
            "Ethay uickqay ownbray oxfay"
        );
    }

    #[test]
    fn label_maps() {
        assert_eq!(remap_agnews("World").unwrap(), "Sports");
        assert_eq!(remap_agnews("Sports").unwrap(), "Business");
        assert_eq!(remap_agnews("Business").unwrap(), "Sci/Tech");
        assert_eq!(remap_agnews("Sci/Tech").unwrap(), "World");
        for l in AGNEWS_LABELS {
            let mut x = l;
            for _ in 0..4 {
                x = remap_agnews(x).unwrap();
            }
            assert_eq!(x, l);
        }
        assert_eq!(reverse_sst5("very negative").unwrap(), "very positive");
        assert_eq!(reverse_sst5("positive").unwrap(), "negative");
        assert_eq!(reverse_sst5("neutral").unwrap(), "neutral");
        for l in SST5_LABELS {
            assert_eq!(reverse_sst5(reverse_sst5(l).unwrap()).unwrap(), l);
        }
        assert!(matches!(remap_agnews("Politics"), Err(Error::UnknownLabel(_))));
        assert!(reverse_sst5("meh").is_err());
    }

    #[test]
    fn noise_modes() {
        let pool = ExemplarPool::new(vec![Exemplar::new("0", "10", "x")]).unwrap();
        let noisy = inject_noise(
            &pool,
            &NoiseSpec {
                ratio: 1.0,
                mode: NoiseMode::LrStructured,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!(noisy.get(0).unwrap().output, "42");
        assert!(noisy.get(0).unwrap().is_noisy());

        let words = ExemplarPool::new(vec![Exemplar::new("0", "hi there", "x")]).unwrap();
        let rep = inject_noise(
            &words,
            &NoiseSpec {
                ratio: 1.0,
                mode: NoiseMode::LpRepeatInput,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!(rep.get(0).unwrap().output, "hi there");

        let text = ExemplarPool::new(vec![Exemplar::new("0", "abc", "x")]).unwrap();
        assert!(matches!(
            inject_noise(
                &text,
                &NoiseSpec {
                    ratio: 1.0,
                    mode: NoiseMode::LrStructured,
                    seed: 0
                }
            ),
            Err(Error::NonNumeric(_))
        ));
        assert!(NoiseSpec {
            ratio: 1.5,
            mode: NoiseMode::RandomLabel,
            seed: 0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn random_label_uses_other_exemplars() {
        let pool = ExemplarPool::new(
            (0..30)
                .map(|i| Exemplar::new(i.to_string(), format!("in{i}"), format!("out{i}")))
                .collect(),
        )
        .unwrap();
        let noisy = inject_noise(
            &pool,
            &NoiseSpec {
                ratio: 1.0,
                mode: NoiseMode::RandomLabel,
                seed: 3,
            },
        )
        .unwrap();
        for (i, e) in noisy.iter().enumerate() {
            assert_ne!(e.output, format!("out{i}"));
            assert!(e.output.starts_with("out"));
        }
    }

    proptest! {
        #[test]
        fn noise_changes_exactly_round_rn(ratio in 0.0f64..=1.0, seed in 0u64..1000) {
            let pool = gen_lr(&LrSpec { n: 40, seed, ..LrSpec::default() }).unwrap();
            let noisy = inject_noise(&pool, &NoiseSpec { ratio, mode: NoiseMode::LrStructured, seed }).unwrap();
            let want = (ratio * 40.0).round() as usize;
            prop_assert_eq!(noisy.iter().filter(|e| e.is_noisy()).count(), want);
            let mut changed = 0;
            for (a, b) in pool.iter().zip(noisy.iter()) {
                prop_assert_eq!(&a.input, &b.input);
                if a.output != b.output { changed += 1; }
            }
            // 5x − 8 = −4x + 6 only at non-integer x, so every relabel changes the output.
            prop_assert_eq!(changed, want);
            for e in noisy.iter().filter(|e| !e.is_noisy()) {
                let x: i64 = e.input.parse().unwrap();
                prop_assert_eq!(e.output.parse::<i64>().unwrap(), -4 * x + 6);
            }
        }
    }

    #[test]
    fn split_is_disjoint_and_roundtrips() {
        let all = gen_lr(&LrSpec {
            n: 30,
            ..LrSpec::default()
        })
        .unwrap();
        let (pool, val) = split(&all, 10, 1).unwrap();
        assert_eq!(pool.len(), 20);
        assert_eq!(val.len(), 10);
        let dir = tempfile::tempdir().unwrap();
        pool.save(dir.path().join("pool.jsonl")).unwrap();
        val.save(dir.path().join("validation.jsonl")).unwrap();
        let p2 = ExemplarPool::load(dir.path().join("pool.jsonl")).unwrap();
        assert_eq!(p2, pool);
        let v2 = ValidationSet::load(dir.path().join("validation.jsonl"), &p2).unwrap();
        assert_eq!(v2, val);
        assert!(split(&all, 30, 1).is_err());
    }
}
