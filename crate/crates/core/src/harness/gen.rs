//! Task generation: build exemplars, split off validation, inject noise, write the task directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::task::Task;
use crate::domain::{Exemplar, ExemplarPool, InstructionSet};
use crate::error::{Error, Result};
use crate::taskgen::{
    gen_lp_variant, gen_lr, inject_noise, relabel, remap_agnews, reverse_sst5, split, LrSpec, NoiseMode, NoiseSpec,
    VowelSuffix,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum Generator {
    /// `y = a·x + b` over distinct integers; `n` is the pool size.
    Lr {
        a: i64,
        b: i64,
        n: usize,
        lo: i64,
        hi: i64,
    },
    /// Pig-Latin variant of user-supplied sentences.
    Lp { input: PathBuf, vowel_suffix: VowelSuffix },
    AgnewsRemap { input: PathBuf },
    Sst5Reverse { input: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    #[serde(flatten)]
    pub generator: Generator,
    pub validation_size: usize,
    pub noise_ratio: f64,
    pub noise_mode: NoiseMode,
    pub seed: u64,
    /// Plain-text file, one instruction per line.
    pub instructions: Option<PathBuf>,
}

/// Reads `input`/`label` items: JSON lines with `input` and `output` (or
/// `label`), or tab-separated `input<TAB>label` lines.
pub fn read_labeled(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |r: &str| Error::parse(path, i + 1, r);
        if line.trim_start().starts_with('{') {
            let v: Value = serde_json::from_str(line).map_err(|e| bad(&e.to_string()))?;
            let field = |k: &str| v.get(k).and_then(Value::as_str).map(str::to_string);
            let input = field("input").ok_or_else(|| bad("missing string field `input`"))?;
            let label = field("output")
                .or_else(|| field("label"))
                .ok_or_else(|| bad("missing string field `output` or `label`"))?;
            out.push((input, label));
        } else {
            let (input, label) = line.rsplit_once('\t').ok_or_else(|| bad("expected input<TAB>label"))?;
            out.push((input.to_string(), label.to_string()));
        }
    }
    Ok(out)
}

/// Reads one sentence per line (or a JSON `input` field).
pub fn read_sentences(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if line.trim_start().starts_with('{') {
            let v: Value = serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e))?;
            let s = v
                .get("input")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::parse(path, i + 1, "missing string field `input`"))?;
            out.push(s.to_string());
        } else {
            out.push(line.to_string());
        }
    }
    Ok(out)
}

fn labeled_pool(items: Vec<(String, String)>) -> Result<ExemplarPool> {
    ExemplarPool::new(
        items
            .into_iter()
            .enumerate()
            .map(|(i, (x, y))| Exemplar::new(i.to_string(), x, y))
            .collect(),
    )
}

/// Generates the task into `out` and returns the manifest path.
pub fn gen_task(spec: &GenSpec, out: &Path) -> Result<PathBuf> {
    let all = match &spec.generator {
        Generator::Lr { a, b, n, lo, hi } => gen_lr(&LrSpec {
            a: *a,
            b: *b,
            n: n + spec.validation_size,
            lo: *lo,
            hi: *hi,
            seed: spec.seed,
        })?,
        Generator::Lp { input, vowel_suffix } => gen_lp_variant(&read_sentences(input)?, *vowel_suffix)?,
        Generator::AgnewsRemap { input } => relabel(&labeled_pool(read_labeled(input)?)?, remap_agnews)?,
        Generator::Sst5Reverse { input } => relabel(&labeled_pool(read_labeled(input)?)?, reverse_sst5)?,
    };
    let (pool, validation) = split(&all, spec.validation_size, spec.seed)?;
    let noise = NoiseSpec {
        ratio: spec.noise_ratio,
        mode: spec.noise_mode,
        seed: spec.seed,
    };
    let pool = inject_noise(&pool, &noise)?;
    let instructions = match &spec.instructions {
        Some(p) => {
            let lines: Vec<String> = fs::read_to_string(p)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(str::to_string)
                .collect();
            if lines.is_empty() {
                return Err(Error::EmptyInstructions);
            }
            Some(InstructionSet::new(lines))
        }
        None => None,
    };
    let mut manifest = serde_json::to_value(spec)?;
    let extra = json!({
        "pool_size": pool.len(),
        "noisy": pool.iter().filter(|e| e.is_noisy()).count(),
        "instruction_count": instructions.as_ref().map(InstructionSet::len),
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut manifest, extra) {
        m.extend(e);
    }
    Task::write(out, &pool, &validation, instructions.as_ref(), &manifest)
}
