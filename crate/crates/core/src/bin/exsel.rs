use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use exsel::embed::EmbeddingCache;
use exsel::harness::config::{read_config_file, resolve, set_path, to_map};
use exsel::harness::gen::{gen_task, GenSpec, Generator};
use exsel::harness::{self, Ledger, RunOptions, RunResult, LEDGER_FILE};
use exsel::taskgen::{NoiseMode, VowelSuffix};
use exsel::Error;

#[derive(Parser)]
#[command(name = "exsel", version, about = "Search for high-scoring ordered exemplar sequences under a query budget")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a run and stream its ledger to disk.
    Run(RunArgs),
    /// Continue an interrupted run from its ledger.
    Resume(ResumeArgs),
    /// Generate a task directory.
    GenTask(GenTaskArgs),
    /// Summarize one or more ledgers.
    Report(ReportArgs),
    /// Inspect or clear an embedding cache file.
    EmbedCache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Task directory with pool.jsonl and validation.jsonl.
    #[arg(long)]
    task: PathBuf,
    /// Run directory; defaults to <task>/runs/<strategy>-seed<seed>-<run id>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: CommonRunArgs,
}

#[derive(Args)]
struct ResumeArgs {
    /// Run directory holding ledger.jsonl.
    run_dir: PathBuf,
    #[command(flatten)]
    common: CommonRunArgs,
}

#[derive(Args)]
struct CommonRunArgs {
    /// JSON config file with `run`, `scorer` and `embedder` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: RunFlags,
    /// Stop after this many new evaluations (the ledger stays resumable).
    #[arg(long)]
    stop_after: Option<usize>,
    /// Embedding cache file.
    #[arg(long)]
    embed_cache: Option<PathBuf>,
}

#[derive(Args, Default)]
struct RunFlags {
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    t_init: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    q_prime: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    nu: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    joint_instructions: Option<bool>,
    #[arg(long)]
    instruction_ratio: Option<f64>,
    /// ordered-text or avg-exemplar.
    #[arg(long)]
    embedding_mode: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    k_range: Option<bool>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    dedup_history: Option<bool>,
    /// min or max (ot-metric baseline).
    #[arg(long)]
    polarity: Option<String>,
    #[arg(long)]
    retrieval_r: Option<usize>,
    #[arg(long)]
    prefilter_m: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    disable_ot: Option<bool>,
    /// exact or sinkhorn.
    #[arg(long)]
    ot_solver: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    sinkhorn_epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    sinkhorn_max_iter: usize,
    #[arg(long)]
    concurrency: Option<usize>,
    /// Hidden layer widths, e.g. 128,128.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    warm_start: Option<bool>,
    /// sim-planted, sim-exactrule or remote-llm.
    #[arg(long)]
    scorer: Option<String>,
    /// Clean exemplar ids for the planted oracle.
    #[arg(long, value_delimiter = ',')]
    clean: Option<Vec<String>>,
    /// Position weights for the planted oracle.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Planted-oracle instruction bonus as INDEX=VALUE; repeatable.
    #[arg(long)]
    instruction_bonus: Vec<String>,
    #[arg(long)]
    oracle_seed: Option<u64>,
    #[arg(long)]
    llm_endpoint: Option<String>,
    #[arg(long)]
    llm_model: Option<String>,
    #[arg(long)]
    llm_max_tokens: Option<u32>,
    /// local-deterministic or remote.
    #[arg(long)]
    embedder: Option<String>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    embed_seed: Option<u64>,
    #[arg(long)]
    embed_endpoint: Option<String>,
    #[arg(long)]
    embed_model: Option<String>,
}

impl RunFlags {
    fn is_empty(&self) -> bool {
        let mut probe = Map::new();
        self.apply(&mut probe).map(|_| probe.is_empty()).unwrap_or(false)
    }

    fn apply(&self, m: &mut Map<String, Value>) -> exsel::Result<()> {
        fn put<T: serde::Serialize>(m: &mut Map<String, Value>, path: &str, v: &Option<T>) {
            if let Some(v) = v {
                set_path(m, path, json!(v));
            }
        }
        put(m, "run.strategy", &self.strategy);
        put(m, "run.k", &self.k);
        put(m, "run.budget", &self.budget);
        put(m, "run.t_init", &self.t_init);
        put(m, "run.q", &self.q);
        put(m, "run.q_prime", &self.q_prime);
        put(m, "run.nu", &self.nu);
        put(m, "run.seed", &self.seed);
        put(m, "run.joint_instructions", &self.joint_instructions);
        put(m, "run.instruction_ratio", &self.instruction_ratio);
        put(m, "run.embedding_mode", &self.embedding_mode);
        put(m, "run.k_range", &self.k_range);
        put(m, "run.k_max", &self.k_max);
        put(m, "run.dedup_history", &self.dedup_history);
        put(m, "run.polarity", &self.polarity);
        put(m, "run.retrieval_r", &self.retrieval_r);
        put(m, "run.prefilter_m", &self.prefilter_m);
        put(m, "run.disable_ot", &self.disable_ot);
        match self.ot_solver.as_deref() {
            None => {}
            Some("sinkhorn") => set_path(
                m,
                "run.ot_solver",
                json!({"kind": "sinkhorn", "epsilon": self.sinkhorn_epsilon, "max_iter": self.sinkhorn_max_iter}),
            ),
            Some(other) => set_path(m, "run.ot_solver", json!({ "kind": other })),
        }
        put(m, "run.concurrency", &self.concurrency);
        put(m, "run.surrogate.hidden", &self.hidden);
        put(m, "run.surrogate.epochs", &self.epochs);
        put(m, "run.surrogate.learning_rate", &self.learning_rate);
        put(m, "run.surrogate.lambda", &self.lambda);
        put(m, "run.surrogate.weight_decay", &self.weight_decay);
        put(m, "run.surrogate.batch_size", &self.batch_size);
        put(m, "run.surrogate.warm_start", &self.warm_start);
        put(m, "scorer.kind", &self.scorer);
        put(m, "scorer.clean", &self.clean);
        put(m, "scorer.weights", &self.weights);
        put(m, "scorer.seed", &self.oracle_seed);
        if !self.instruction_bonus.is_empty() {
            let mut bonus = Map::new();
            for entry in &self.instruction_bonus {
                let bad = || Error::Config(format!("--instruction-bonus expects INDEX=VALUE, got `{entry}`"));
                let (i, v) = entry.split_once('=').ok_or_else(bad)?;
                let i: usize = i.trim().parse().map_err(|_| bad())?;
                let v: f64 = v.trim().parse().map_err(|_| bad())?;
                bonus.insert(i.to_string(), json!(v));
            }
            set_path(m, "scorer.instruction_bonus", Value::Object(bonus));
        }
        put(m, "scorer.endpoint", &self.llm_endpoint);
        put(m, "scorer.model", &self.llm_model);
        put(m, "scorer.max_tokens", &self.llm_max_tokens);
        put(m, "embedder.kind", &self.embedder);
        put(m, "embedder.dim", &self.embed_dim);
        put(m, "embedder.seed", &self.embed_seed);
        put(m, "embedder.endpoint", &self.embed_endpoint);
        put(m, "embedder.model", &self.embed_model);
        Ok(())
    }
}

impl CommonRunArgs {
    /// Layers the config file and then the flags over `base`.
    fn layered(&self, mut base: Map<String, Value>) -> exsel::Result<Map<String, Value>> {
        if let Some(path) = &self.config {
            for (k, v) in read_config_file(path)? {
                merge(&mut base, k, v);
            }
        }
        self.flags.apply(&mut base)?;
        Ok(base)
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            stop_after: self.stop_after,
            embed_cache: self.embed_cache.clone(),
        }
    }
}

/// Deep merge: objects merge key by key, anything else replaces.
fn merge(into: &mut Map<String, Value>, key: String, value: Value) {
    match (into.get_mut(&key), value) {
        (Some(Value::Object(dst)), Value::Object(src)) => {
            for (k, v) in src {
                merge(dst, k, v);
            }
        }
        (_, v) => {
            into.insert(key, v);
        }
    }
}

#[derive(Args)]
struct GenTaskArgs {
    #[arg(value_enum)]
    generator: GenKind,
    /// Output task directory.
    #[arg(long)]
    out: PathBuf,
    /// Input file for the relabeling and pig-Latin generators.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = -4, allow_negative_numbers = true)]
    a: i64,
    #[arg(long, default_value_t = 6, allow_negative_numbers = true)]
    b: i64,
    /// Pool size for the linear-regression task.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = -200, allow_negative_numbers = true)]
    lo: i64,
    #[arg(long, default_value_t = 200, allow_negative_numbers = true)]
    hi: i64,
    #[arg(long, value_enum, default_value_t = SuffixArg::Ay)]
    vowel_suffix: SuffixArg,
    #[arg(long, default_value_t = 20)]
    validation_size: usize,
    /// Fraction of pool exemplars to corrupt.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_enum)]
    noise_mode: Option<NoiseArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Plain-text instruction candidates, one per line.
    #[arg(long)]
    instructions: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Lr,
    Lp,
    AgnewsRemap,
    Sst5Reverse,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuffixArg {
    Ay,
    Yay,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    RandomLabel,
    LrStructured,
    LpRepeatInput,
}

#[derive(Args)]
struct ReportArgs {
    /// Ledger files or run directories.
    #[arg(required = true)]
    ledgers: Vec<PathBuf>,
    /// Also write the JSON summary here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Print JSON instead of text.
    #[arg(long)]
    print_json: bool,
}

#[derive(Subcommand)]
enum CacheAction {
    /// Print entry count and dimension.
    Inspect { path: PathBuf },
    /// Delete the cache file.
    Clear { path: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::EmptyInstructions | Error::OracleParams(_) => 2,
        _ => 1,
    }
}

fn print_result(r: &RunResult) {
    println!("ledger: {}", r.ledger_path().display());
    println!("run id: {}", r.run_id);
    let status = if r.complete { "complete" } else { "stopped early" };
    println!("evaluations: {} ({} new, {status})", r.evaluations, r.new_evaluations);
    if let Some(b) = &r.best {
        let instr = b.instruction.map(|i| format!(" + instruction {i}")).unwrap_or_default();
        println!("best: {:.6} at iteration {} [{}]{instr}", b.score, b.iteration, b.ids.join(", "));
    }
}

fn cmd_run(args: RunArgs) -> exsel::Result<()> {
    let spec = resolve(args.common.layered(Map::new())?)?;
    let out = match args.out {
        Some(o) => o,
        None => {
            let task = harness::Task::load(&args.task)?;
            let id = spec.run_id(&task.digest()?)?;
            args.task
                .join("runs")
                .join(format!("{}-seed{}-{}", spec.run.strategy.name(), spec.run.seed, &id[..8]))
        }
    };
    let r = harness::start(&args.task, spec, &out, &args.common.options())?;
    print_result(&r);
    Ok(())
}

fn cmd_resume(args: ResumeArgs) -> exsel::Result<()> {
    let overrides = if args.common.config.is_some() || !args.common.flags.is_empty() {
        let ledger = Ledger::read(args.run_dir.join(LEDGER_FILE))?;
        Some(args.common.layered(to_map(&ledger.header.spec)?)?)
    } else {
        None
    };
    let r = harness::resume(&args.run_dir, overrides, &args.common.options())?;
    if r.new_evaluations == 0 && r.complete {
        println!("run already complete; nothing to do");
    }
    print_result(&r);
    Ok(())
}

fn cmd_gen_task(a: GenTaskArgs) -> exsel::Result<()> {
    let need_input = |a: &GenTaskArgs| -> exsel::Result<PathBuf> {
        a.input
            .clone()
            .ok_or_else(|| Error::Config("this generator needs --in FILE".into()))
    };
    let generator = match a.generator {
        GenKind::Lr => Generator::Lr {
            a: a.a,
            b: a.b,
            n: a.n,
            lo: a.lo,
            hi: a.hi,
        },
        GenKind::Lp => Generator::Lp {
            input: need_input(&a)?,
            vowel_suffix: match a.vowel_suffix {
                SuffixArg::Ay => VowelSuffix::Ay,
                SuffixArg::Yay => VowelSuffix::Yay,
            },
        },
        GenKind::AgnewsRemap => Generator::AgnewsRemap { input: need_input(&a)? },
        GenKind::Sst5Reverse => Generator::Sst5Reverse { input: need_input(&a)? },
    };
    let noise_mode = match (a.noise_mode, a.generator) {
        (Some(NoiseArg::RandomLabel), _) | (None, GenKind::AgnewsRemap | GenKind::Sst5Reverse) => NoiseMode::RandomLabel,
        (Some(NoiseArg::LrStructured), _) | (None, GenKind::Lr) => NoiseMode::LrStructured,
        (Some(NoiseArg::LpRepeatInput), _) | (None, GenKind::Lp) => NoiseMode::LpRepeatInput,
    };
    let spec = GenSpec {
        generator,
        validation_size: a.validation_size,
        noise_ratio: a.noise,
        noise_mode,
        seed: a.seed,
        instructions: a.instructions,
    };
    let manifest = gen_task(&spec, &a.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn cmd_report(a: ReportArgs) -> exsel::Result<()> {
    let summary = harness::report(&a.ledgers)?;
    let json = serde_json::to_string_pretty(&summary)?;
    if let Some(p) = &a.json {
        std::fs::write(p, json.clone() + "\n")?;
    }
    if a.print_json {
        println!("{json}");
    } else {
        print!("{}", harness::render_text(&summary));
    }
    Ok(())
}

fn cmd_cache(action: CacheAction) -> exsel::Result<()> {
    match action {
        CacheAction::Inspect { path } => {
            let cache = EmbeddingCache::load(&path)?;
            let bytes = std::fs::metadata(&path)?.len();
            println!("path: {}", path.display());
            println!("entries: {}", cache.len());
            match cache.dim() {
                Some(d) => println!("dim: {d}"),
                None => println!("dim: -"),
            }
            println!("bytes: {bytes}");
        }
        CacheAction::Clear { path } => {
            if Path::new(&path).exists() {
                EmbeddingCache::load(&path)?;
                std::fs::remove_file(&path)?;
                println!("removed {}", path.display());
            } else {
                println!("{} does not exist", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Resume(a) => cmd_resume(a),
        Command::GenTask(a) => cmd_gen_task(a),
        Command::Report(a) => cmd_report(a),
        Command::EmbedCache { action } => cmd_cache(action),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
