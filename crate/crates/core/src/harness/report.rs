//! Summaries computed from ledgers alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ledger::Ledger;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ledger: PathBuf,
    pub run_id: String,
    pub strategy: String,
    pub seed: u64,
    pub evaluations: usize,
    pub complete: bool,
    pub best_score: f64,
    pub best_iteration: usize,
    pub best_ids: Vec<String>,
    pub best_instruction: Option<usize>,
    /// Running maximum of the score, one entry per evaluation.
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub runs: usize,
    pub mean_best: f64,
    /// Sample standard deviation over √runs; 0 for a single run.
    pub std_err: f64,
    /// Pointwise mean of the runs' curves over the shortest run.
    pub mean_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub runs: Vec<RunSummary>,
    pub strategies: Vec<StrategySummary>,
}

pub fn running_max(scores: &[f64]) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    scores
        .iter()
        .map(|&s| {
            best = best.max(s);
            best
        })
        .collect()
}

/// Mean and standard error of the mean.
pub fn mean_std_err(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyScores);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

pub fn summarize_run(path: &Path, ledger: &Ledger) -> Result<RunSummary> {
    let best = ledger.best().ok_or_else(|| Error::CorruptLedger {
        line: 1,
        reason: format!("{} holds no evaluations", path.display()),
    })?;
    let run = &ledger.header.spec.run;
    Ok(RunSummary {
        ledger: path.to_path_buf(),
        run_id: ledger.header.run_id.clone(),
        strategy: run.strategy.name().to_string(),
        seed: run.seed,
        evaluations: ledger.evals.len(),
        complete: ledger.final_record.is_some(),
        best_score: best.score,
        best_iteration: best.iteration,
        best_ids: best.ids.clone(),
        best_instruction: best.instruction,
        curve: running_max(&ledger.scores()),
    })
}

/// Aggregates runs per strategy, strategies in name order.
pub fn summarize(runs: Vec<RunSummary>) -> Result<ReportSummary> {
    let mut groups: BTreeMap<&str, Vec<&RunSummary>> = BTreeMap::new();
    for r in &runs {
        groups.entry(r.strategy.as_str()).or_default().push(r);
    }
    let strategies = groups
        .into_iter()
        .map(|(name, rs)| {
            let bests: Vec<f64> = rs.iter().map(|r| r.best_score).collect();
            let (mean_best, std_err) = mean_std_err(&bests)?;
            let len = rs.iter().map(|r| r.curve.len()).min().unwrap_or(0);
            let mean_curve = (0..len)
                .map(|i| rs.iter().map(|r| r.curve[i]).sum::<f64>() / rs.len() as f64)
                .collect();
            Ok(StrategySummary {
                strategy: name.to_string(),
                runs: rs.len(),
                mean_best,
                std_err,
                mean_curve,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReportSummary { runs, strategies })
}

/// Reads ledgers in parallel and summarizes them. A directory argument means
/// its `ledger.jsonl`.
pub fn report(paths: &[PathBuf]) -> Result<ReportSummary> {
    let runs = paths
        .par_iter()
        .map(|p| {
            let path = if p.is_dir() {
                p.join(super::ledger::LEDGER_FILE)
            } else {
                p.clone()
            };
            let ledger = Ledger::read(&path).map_err(|e| match e {
                Error::CorruptLedger { line, reason } => Error::CorruptLedger {
                    line,
                    reason: format!("{}: {reason}", path.display()),
                },
                Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
                other => other,
            })?;
            summarize_run(&path, &ledger)
        })
        .collect::<Result<Vec<_>>>()?;
    summarize(runs)
}

fn render_best(ids: &[String], instruction: Option<usize>) -> String {
    let mut s = format!("[{}]", ids.join(", "));
    if let Some(i) = instruction {
        let _ = write!(s, " + instruction {i}");
    }
    s
}

/// Plain-text rendering: per-strategy table, then one line per run.
pub fn render_text(summary: &ReportSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<18} {:>5} {:>20}", "strategy", "runs", "best (mean ± se)");
    for s in &summary.strategies {
        let _ = writeln!(
            out,
            "{:<18} {:>5} {:>20}",
            s.strategy,
            s.runs,
            format!("{:.4} ± {:.4}", s.mean_best, s.std_err)
        );
    }
    out.push('\n');
    for r in &summary.runs {
        let _ = writeln!(
            out,
            "{} {} seed={} evals={}{} best={:.4} at {} {}",
            r.ledger.display(),
            r.strategy,
            r.seed,
            r.evaluations,
            if r.complete { "" } else { " (incomplete)" },
            r.best_score,
            r.best_iteration,
            render_best(&r.best_ids, r.best_instruction)
        );
        let curve: Vec<String> = r.curve.iter().map(|v| format!("{v:.3}")).collect();
        let _ = writeln!(out, "  curve: {}", curve.join(" "));
    }
    out
}
