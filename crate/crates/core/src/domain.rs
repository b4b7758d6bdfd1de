//! Domain types shared across the crate: exemplars, pools, sequences and the
//! observation history, plus loading and saving of line-delimited JSON task files.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// One input/output demonstration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub id: String,
    pub input: String,
    pub output: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl Exemplar {
    pub fn new(id: impl Into<String>, input: impl Into<String>, output: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            input: input.into(),
            output: output.into(),
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    /// True when taskgen tagged this exemplar as noisy.
    pub fn is_noisy(&self) -> bool {
        self.meta.get("noise").map(|v| v == "true").unwrap_or(false)
    }

    fn check(&self) -> Result<()> {
        if self.input.trim().is_empty() {
            return Err(Error::InvalidExemplar {
                id: self.id.clone(),
                reason: "input is empty".into(),
            });
        }
        if self.output.trim().is_empty() {
            return Err(Error::InvalidExemplar {
                id: self.id.clone(),
                reason: "output is empty".into(),
            });
        }
        Ok(())
    }
}

/// The exemplar pool D. Sequences refer to exemplars by their position in the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarPool {
    exemplars: Vec<Exemplar>,
    index: HashMap<String, usize>,
}

impl ExemplarPool {
    pub fn new(exemplars: Vec<Exemplar>) -> Result<Self> {
        let mut index = HashMap::with_capacity(exemplars.len());
        for (i, e) in exemplars.iter().enumerate() {
            e.check()?;
            if index.insert(e.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self { exemplars, index })
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn get(&self, idx: usize) -> Result<&Exemplar> {
        self.exemplars
            .get(idx)
            .ok_or_else(|| Error::UnresolvedId(format!("#{idx}")))
    }

    pub fn position(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnresolvedId(id.to_string()))
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    pub fn iter(&self) -> impl Iterator<Item = &Exemplar> {
        self.exemplars.iter()
    }

    /// A new pool holding the exemplars at `positions`, in the given order.
    pub fn subset(&self, positions: &[usize]) -> Result<Self> {
        let picked = positions
            .iter()
            .map(|&p| self.get(p).cloned())
            .collect::<Result<Vec<_>>>()?;
        Self::new(picked)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(read_exemplars(path.as_ref(), "")?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_exemplars(path.as_ref(), &self.exemplars)
    }
}

/// Held-out validation set D_V.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSet {
    items: Vec<Exemplar>,
}

impl ValidationSet {
    /// Builds a validation set and checks it shares no id with `pool`.
    pub fn new(items: Vec<Exemplar>, pool: &ExemplarPool) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyValidation);
        }
        let mut seen = HashSet::new();
        for item in &items {
            item.check()?;
            if !seen.insert(item.id.as_str()) {
                return Err(Error::DuplicateId(item.id.clone()));
            }
            if pool.contains_id(&item.id) {
                return Err(Error::ValidationOverlap(item.id.clone()));
            }
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[Exemplar] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Loads validation items; lines without an `id` get `v{line}`.
    pub fn load(path: impl AsRef<Path>, pool: &ExemplarPool) -> Result<Self> {
        Self::new(read_exemplars(path.as_ref(), "v")?, pool)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_exemplars(path.as_ref(), &self.items)
    }
}

/// Candidate instructions P.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InstructionSet {
    instructions: Vec<String>,
}

impl InstructionSet {
    pub fn new(instructions: Vec<String>) -> Self {
        Self { instructions }
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn get(&self, idx: usize) -> Result<&str> {
        self.instructions
            .get(idx)
            .map(String::as_str)
            .ok_or(Error::UnresolvedInstruction(idx))
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.instructions.iter().map(String::as_str)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for (lineno, value) in read_json_lines(path)? {
            let text = value
                .get("instruction")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::parse(path, lineno, "missing string field `instruction`"))?;
            out.push(text.to_string());
        }
        Ok(Self::new(out))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for text in &self.instructions {
            serde_json::to_writer(&mut w, &serde_json::json!({ "instruction": text }))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// An ordered selection of distinct pool exemplars, optionally led by an instruction.
///
/// Identity is the ordered tuple `(instruction, exemplars)`: the same subset in a
/// different order is a different sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExemplarSequence {
    instruction: Option<usize>,
    exemplars: Vec<usize>,
}

impl ExemplarSequence {
    pub fn new(exemplars: Vec<usize>, instruction: Option<usize>) -> Result<Self> {
        if exemplars.is_empty() {
            return Err(Error::SequenceLength {
                expected: 1,
                got: 0,
            });
        }
        let mut seen = HashSet::with_capacity(exemplars.len());
        for &e in &exemplars {
            if !seen.insert(e) {
                return Err(Error::RepeatedExemplar(e));
            }
        }
        Ok(Self {
            instruction,
            exemplars,
        })
    }

    /// Like [`ExemplarSequence::new`] but also enforces the fixed length `k`.
    pub fn with_length(exemplars: Vec<usize>, instruction: Option<usize>, k: usize) -> Result<Self> {
        if exemplars.len() != k {
            return Err(Error::SequenceLength {
                expected: k,
                got: exemplars.len(),
            });
        }
        Self::new(exemplars, instruction)
    }

    pub fn exemplars(&self) -> &[usize] {
        &self.exemplars
    }

    pub fn instruction(&self) -> Option<usize> {
        self.instruction
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn with_instruction(&self, instruction: Option<usize>) -> Self {
        Self {
            instruction,
            exemplars: self.exemplars.clone(),
        }
    }

    /// The order-free subset key (sorted positions).
    pub fn subset_key(&self) -> Vec<usize> {
        let mut key = self.exemplars.clone();
        key.sort_unstable();
        key
    }

    /// String ids of the members, in sequence order.
    pub fn ids<'a>(&self, pool: &'a ExemplarPool) -> Result<Vec<&'a str>> {
        self.exemplars
            .iter()
            .map(|&p| pool.get(p).map(|e| e.id.as_str()))
            .collect()
    }

    /// Resolves string ids against `pool`.
    pub fn from_ids<S: AsRef<str>>(
        ids: &[S],
        instruction: Option<usize>,
        pool: &ExemplarPool,
    ) -> Result<Self> {
        let positions = ids
            .iter()
            .map(|id| pool.position(id.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(positions, instruction)
    }
}

/// One evaluated sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub sequence: ExemplarSequence,
    pub score: f64,
    pub iteration: usize,
}

impl Observation {
    pub fn new(sequence: ExemplarSequence, score: f64, iteration: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::ScoreOutOfRange(score));
        }
        Ok(Self {
            sequence,
            score,
            iteration,
        })
    }
}

/// Append-only list of observations with strictly increasing iterations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    observations: Vec<Observation>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, obs: Observation) -> Result<()> {
        if !(0.0..=1.0).contains(&obs.score) {
            return Err(Error::ScoreOutOfRange(obs.score));
        }
        if let Some(last) = self.observations.last() {
            if obs.iteration <= last.iteration {
                return Err(Error::Config(format!(
                    "iteration {} does not follow {}",
                    obs.iteration, last.iteration
                )));
            }
        }
        self.observations.push(obs);
        Ok(())
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn contains(&self, seq: &ExemplarSequence) -> bool {
        self.observations.iter().any(|o| &o.sequence == seq)
    }

    pub fn scores(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.score).collect()
    }

    /// Running maximum of the score, one entry per observation.
    pub fn best_so_far(&self) -> Vec<f64> {
        running_max(&self.scores())
    }
}

pub(crate) fn running_max(scores: &[f64]) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    scores
        .iter()
        .map(|&s| {
            best = best.max(s);
            best
        })
        .collect()
}

/// The highest-scoring observation; ties go to the earliest iteration.
pub fn best_observation(history: &History) -> Result<&Observation> {
    let mut best: Option<&Observation> = None;
    for obs in history.observations() {
        match best {
            Some(b) if obs.score < b.score => {}
            Some(b) if obs.score == b.score && obs.iteration >= b.iteration => {}
            _ => best = Some(obs),
        }
    }
    best.ok_or(Error::EmptyHistory)
}

/// Arithmetic mean of per-sample scores.
pub fn mean_score(per_sample: &[f64]) -> Result<f64> {
    if per_sample.is_empty() {
        return Err(Error::EmptyScores);
    }
    if let Some(&bad) = per_sample.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::ScoreOutOfRange(bad));
    }
    Ok(per_sample.iter().sum::<f64>() / per_sample.len() as f64)
}

fn read_json_lines(path: &Path) -> Result<Vec<(usize, Value)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e))?;
        out.push((i + 1, value));
    }
    Ok(out)
}

fn read_exemplars(path: &Path, default_prefix: &str) -> Result<Vec<Exemplar>> {
    let mut out = Vec::new();
    for (ordinal, (lineno, value)) in read_json_lines(path)?.into_iter().enumerate() {
        let field = |name: &str| -> Result<String> {
            value
                .get(name)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| Error::parse(path, lineno, format!("missing string field `{name}`")))
        };
        let id = match value.get("id") {
            None | Some(Value::Null) => format!("{default_prefix}{ordinal}"),
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            Some(other) => {
                return Err(Error::parse(path, lineno, format!("unsupported id {other}")))
            }
        };
        let mut meta = BTreeMap::new();
        if let Some(Value::Object(map)) = value.get("meta") {
            for (k, v) in map {
                let v = match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                meta.insert(k.clone(), v);
            }
        }
        out.push(Exemplar {
            id,
            input: field("input")?,
            output: field("output")?,
            meta,
        });
    }
    Ok(out)
}

fn write_exemplars(path: &Path, exemplars: &[Exemplar]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in exemplars {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
