//! The run ledger: one JSON record per line, flushed as it is written.
//!
//! Line 1 is a header with the run id and the resolved config snapshot, then
//! one `eval` record per black-box evaluation, then a `final` record once the
//! budget is spent. Wall-clock times go to a separate timings file so that
//! identical runs produce byte-identical ledgers.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunSpec;
use crate::domain::{ExemplarPool, ExemplarSequence, History, Observation};
use crate::error::{Error, Result};

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const LEDGER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub version: u32,
    pub run_id: String,
    /// Absolute path of the task directory.
    pub task: String,
    pub task_digest: String,
    pub spec: RunSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub iteration: usize,
    pub ids: Vec<String>,
    pub instruction: Option<usize>,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ot_distance: Option<f64>,
}

impl EvalRecord {
    pub fn from_observation(obs: &Observation, pool: &ExemplarPool, ot_distance: Option<f64>) -> Result<Self> {
        Ok(Self {
            iteration: obs.iteration,
            ids: obs.sequence.ids(pool)?.into_iter().map(str::to_string).collect(),
            instruction: obs.sequence.instruction(),
            score: obs.score,
            ot_distance,
        })
    }

    /// Resolves ids against `pool` and checks the length rule.
    pub fn to_observation(&self, pool: &ExemplarPool, max_len: usize, fixed: bool) -> Result<Observation> {
        if self.ids.len() > max_len || (fixed && self.ids.len() != max_len) {
            return Err(Error::SequenceLength {
                expected: max_len,
                got: self.ids.len(),
            });
        }
        let seq = ExemplarSequence::from_ids(&self.ids, self.instruction, pool)?;
        Observation::new(seq, self.score, self.iteration)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinalRecord {
    pub evaluations: usize,
    pub best: EvalRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Header(Header),
    Eval(EvalRecord),
    Final(FinalRecord),
}

/// A parsed ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    pub header: Header,
    pub evals: Vec<EvalRecord>,
    pub final_record: Option<FinalRecord>,
}

impl Ledger {
    /// Parses and structurally checks a ledger; any bad line is reported by number.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let reader = BufReader::new(File::open(path.as_ref())?);
        let mut header = None;
        let mut evals: Vec<EvalRecord> = Vec::new();
        let mut final_record = None;
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let corrupt = |reason: String| Error::CorruptLedger { line: line_no, reason };
            let line = line.map_err(|e| corrupt(e.to_string()))?;
            let record: Record = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            if final_record.is_some() {
                return Err(corrupt("record after the final record".into()));
            }
            match (record, header.is_some()) {
                (Record::Header(h), false) => {
                    if h.version != LEDGER_VERSION {
                        return Err(corrupt(format!("unsupported ledger version {}", h.version)));
                    }
                    header = Some(h)
                }
                (Record::Header(_), true) => return Err(corrupt("second header".into())),
                (_, false) => return Err(corrupt("first record must be the header".into())),
                (Record::Eval(e), true) => {
                    if e.iteration != evals.len() {
                        return Err(corrupt(format!(
                            "expected iteration {}, found {}",
                            evals.len(),
                            e.iteration
                        )));
                    }
                    if !(0.0..=1.0).contains(&e.score) {
                        return Err(corrupt(format!("score {} outside [0, 1]", e.score)));
                    }
                    evals.push(e)
                }
                (Record::Final(f), true) => {
                    if f.evaluations != evals.len() {
                        return Err(corrupt(format!(
                            "final record counts {} evaluations, ledger has {}",
                            f.evaluations,
                            evals.len()
                        )));
                    }
                    final_record = Some(f)
                }
            }
        }
        let header = header.ok_or(Error::CorruptLedger {
            line: 1,
            reason: "empty ledger".into(),
        })?;
        Ok(Self {
            header,
            evals,
            final_record,
        })
    }

    /// Rebuilds the history; every sequence must resolve against `pool`.
    pub fn replay(&self, pool: &ExemplarPool) -> Result<History> {
        let rule = self.header.spec.run.length_rule();
        let fixed = !self.header.spec.run.k_range;
        let mut history = History::new();
        for e in &self.evals {
            history.push(e.to_observation(pool, rule.max_len(), fixed)?)?;
        }
        Ok(history)
    }

    pub fn scores(&self) -> Vec<f64> {
        self.evals.iter().map(|e| e.score).collect()
    }

    /// Best record by score, earliest on ties.
    pub fn best(&self) -> Option<&EvalRecord> {
        self.evals
            .iter()
            .fold(None, |best: Option<&EvalRecord>, e| match best {
                Some(b) if b.score >= e.score => Some(b),
                _ => Some(e),
            })
    }
}

/// Append-only writer; every record is a single `write` followed by a flush.
pub struct LedgerWriter {
    file: File,
}

impl LedgerWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self {
            file: OpenOptions::new().write(true).create_new(true).open(path)?,
        })
    }

    pub fn append(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self {
            file: OpenOptions::new().append(true).open(path)?,
        })
    }

    pub fn write(&mut self, record: &Record) -> Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        Ok(())
    }

    /// Forces records to stable storage.
    pub fn sync(&mut self) -> Result<()> {
        self.file.sync_data()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub iteration: usize,
    pub wall_ms: f64,
}
