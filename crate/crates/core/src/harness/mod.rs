//! Run directories: start, resume, and summarize ledger-backed runs.

pub mod config;
pub mod gen;
pub mod ledger;
pub mod report;
pub mod task;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{Map, Value};

use crate::domain::Observation;
use crate::error::{Error, Result};
use crate::optimizer::{self, prepare_pool, EvalInfo, Problem};

pub use config::RunSpec;
pub use ledger::{EvalRecord, FinalRecord, Header, Ledger, LedgerWriter, Record, LEDGER_FILE, TIMINGS_FILE};
pub use report::{report, render_text, ReportSummary};
pub use task::Task;

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop after this many new evaluations, leaving a resumable ledger.
    pub stop_after: Option<usize>,
    /// Embedding cache file; defaults per embedder kind.
    pub embed_cache: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub run_dir: PathBuf,
    pub run_id: String,
    pub evaluations: usize,
    /// Black-box calls made by this process.
    pub new_evaluations: usize,
    pub complete: bool,
    pub best: Option<EvalRecord>,
}

impl RunResult {
    pub fn ledger_path(&self) -> PathBuf {
        self.run_dir.join(LEDGER_FILE)
    }
}

/// Starts a fresh run of `spec` on the task in `task_dir`, writing into `out`.
pub fn start(task_dir: &Path, spec: RunSpec, out: &Path, opts: &RunOptions) -> Result<RunResult> {
    spec.validate()?;
    let task = Task::load(task_dir)?;
    let ledger_path = out.join(LEDGER_FILE);
    if ledger_path.exists() {
        return Err(Error::Config(format!(
            "{} already holds a ledger; resume it or choose another output directory",
            out.display()
        )));
    }
    let digest = task.digest()?;
    let header = Header {
        version: ledger::LEDGER_VERSION,
        run_id: spec.run_id(&digest)?,
        task: fs::canonicalize(task_dir)?.to_string_lossy().into_owned(),
        task_digest: digest,
        spec,
    };
    drive(&header, &task, None, out, opts)
}

/// Continues the run recorded in `run_dir`.
///
/// `overrides`, when given, is a config layered over the recorded snapshot; it
/// must resolve to the same run id or the resume is refused.
pub fn resume(run_dir: &Path, overrides: Option<Map<String, Value>>, opts: &RunOptions) -> Result<RunResult> {
    let ledger = Ledger::read(run_dir.join(LEDGER_FILE))?;
    let header = &ledger.header;
    if let Some(map) = overrides {
        let spec = config::resolve(map)?;
        let id = spec.run_id(&header.task_digest)?;
        if id != header.run_id {
            return Err(Error::Config(format!(
                "config hash {id} does not match the ledger's run id {}; refusing to resume",
                header.run_id
            )));
        }
    }
    let task = Task::load(&header.task)?;
    if task.digest()? != header.task_digest {
        return Err(Error::Resume(format!("task files under {} changed since the run started", header.task)));
    }
    if let Some(f) = &ledger.final_record {
        return Ok(RunResult {
            run_dir: run_dir.to_path_buf(),
            run_id: header.run_id.clone(),
            evaluations: f.evaluations,
            new_evaluations: 0,
            complete: true,
            best: Some(f.best.clone()),
        });
    }
    drive(header, &task, Some(&ledger), run_dir, opts)
}

fn drive(header: &Header, task: &Task, existing: Option<&Ledger>, out: &Path, opts: &RunOptions) -> Result<RunResult> {
    let spec = &header.spec;
    let config = &spec.run;
    let task_dir = Path::new(&header.task);
    let cache_path = opts
        .embed_cache
        .clone()
        .or_else(|| task::default_cache_path(&spec.embedder, task_dir));
    let embedder = task::build_embedder(&spec.embedder, cache_path.as_deref())?;
    let scorer = task::build_scorer(&spec.scorer, &task.pool, config.length_rule().max_len())?;
    let full = Problem {
        pool: &task.pool,
        validation: &task.validation,
        instructions: task.instructions.as_ref(),
        scorer: scorer.as_ref(),
        embedder: &embedder,
    };
    config.validate_for(task.pool.len(), full.instructions)?;
    let pool = prepare_pool(config, full)?;
    let problem = Problem { pool: &pool, ..full };
    config.validate_for(pool.len(), problem.instructions)?;
    let prefix = match existing {
        Some(l) => l.replay(&pool)?,
        None => Default::default(),
    };

    fs::create_dir_all(out)?;
    let ledger_path = out.join(LEDGER_FILE);
    let mut writer = match existing {
        Some(_) => LedgerWriter::append(&ledger_path)?,
        None => {
            let mut w = LedgerWriter::create(&ledger_path)?;
            w.write(&Record::Header(header.clone()))?;
            w
        }
    };
    let mut timings = OpenOptions::new().create(true).append(true).open(out.join(TIMINGS_FILE))?;

    let mut new_evals = 0usize;
    let mut clock = Instant::now();
    let mut observer = |obs: &Observation, info: &EvalInfo| -> Result<()> {
        writer.write(&Record::Eval(EvalRecord::from_observation(obs, &pool, info.ot_distance)?))?;
        let timing = ledger::Timing {
            iteration: obs.iteration,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        };
        clock = Instant::now();
        let mut line = serde_json::to_vec(&timing)?;
        line.push(b'\n');
        timings.write_all(&line)?;
        new_evals += 1;
        match opts.stop_after {
            Some(limit) if new_evals >= limit => Err(Error::Interrupted(new_evals)),
            _ => Ok(()),
        }
    };
    let outcome = optimizer::run(config, problem, &prefix, &mut observer);
    if let Some(p) = &cache_path {
        embedder.cache().save(p)?;
    }
    let result = match outcome {
        Ok(outcome) => {
            let best = EvalRecord::from_observation(&outcome.best, &pool, None)?;
            writer.write(&Record::Final(FinalRecord {
                evaluations: outcome.history.len(),
                best: best.clone(),
            }))?;
            writer.sync()?;
            let ledger = Ledger::read(&ledger_path)?;
            let summary = report::summarize_run(&ledger_path, &ledger)?;
            fs::write(out.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
            RunResult {
                run_dir: out.to_path_buf(),
                run_id: header.run_id.clone(),
                evaluations: outcome.history.len(),
                new_evaluations: new_evals,
                complete: true,
                best: Some(best),
            }
        }
        Err(Error::Interrupted(_)) => {
            writer.sync()?;
            let ledger = Ledger::read(&ledger_path)?;
            RunResult {
                run_dir: out.to_path_buf(),
                run_id: header.run_id.clone(),
                evaluations: ledger.evals.len(),
                new_evaluations: new_evals,
                complete: false,
                best: ledger.best().cloned(),
            }
        }
        Err(e) => return Err(e),
    };
    Ok(result)
}
