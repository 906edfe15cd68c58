//! `kevo` subcommands. Each reads the shared configuration, applies
//! `--dotted.key=value` overrides and echoes the effective config next to
//! its outputs.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::eval::{EvalHarness, KernelTask};
use crate::miner::{self, CommitStore};
use crate::orchestrator::{EohRunner, Orchestrator};
use crate::pool::{build_pool, IdeaPool};
use crate::rag::{index_documents, load_corpus, RetrievalIndex};
use crate::report;
use crate::util;

#[derive(Debug, Parser)]
#[command(name = "kevo", version, about = "Idea-guided evolutionary kernel optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter, embed and score an exported commit log.
    Mine(CommonArgs),
    /// Abstract mined commits into an idea pool.
    BuildPool(CommonArgs),
    /// Chunk and embed a document corpus.
    Index(CommonArgs),
    /// Run the search loop over the configured tasks.
    Run(CommonArgs),
    /// Evaluate one kernel source against the first configured task.
    Evaluate(CommonArgs),
    /// Summarize completed run directories.
    Report(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// `--config <file>`, `--key.path=value` overrides and, for `report`,
    /// run directories.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    pub rest: Vec<String>,
}

/// Split of the free-form arguments.
#[derive(Debug, Default, PartialEq)]
pub struct Invocation {
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub positional: Vec<String>,
}

pub fn split_args(rest: &[String]) -> Result<Invocation> {
    let mut out = Invocation::default();
    let mut it = rest.iter();
    while let Some(arg) = it.next() {
        match arg.strip_prefix("--") {
            Some("config") => {
                let path = it
                    .next()
                    .ok_or_else(|| Error::Config("--config needs a path".into()))?;
                out.config = Some(path.into());
            }
            Some(kv) if kv.starts_with("config=") => out.config = Some(kv["config=".len()..].into()),
            Some(kv) if kv.contains('=') => out.overrides.push(kv.to_string()),
            Some(flag) => return Err(Error::Config(format!("override `--{flag}` needs `=value`"))),
            None => out.positional.push(arg.clone()),
        }
    }
    Ok(out)
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Template(_) | Error::Schema(_) => 2,
        Error::Environment(_) | Error::Transport(_) | Error::Io { .. } => 3,
        Error::Reference(_) => 4,
        _ => 1,
    }
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", path.display())))
    }
}

fn echo_path(output: &Path) -> PathBuf {
    output.with_extension("config.json")
}

fn cmd_mine(config: &Config) -> Result<i32> {
    let files = &config.files;
    require(&files.log, "commit log")?;
    require(&files.ppes, "performance snapshot file")?;
    let raw = miner::ingest_commits_file(&files.log)?;
    let ppes = miner::read_ppes_file(&files.ppes)?;
    let gateway = config.llm.build()?;
    let (store, counts) = miner::mine(&raw, &ppes, &config.rules, config.mine.direction, &gateway)?;
    store.save(&files.commits)?;
    config.write_echo(&echo_path(&files.commits))?;
    println!(
        "ingested {} kept {} unclassified {} windowed {} -> {}",
        counts.ingested,
        counts.kept,
        counts.unclassified,
        counts.windowed,
        files.commits.display()
    );
    Ok(0)
}

fn cmd_build_pool(config: &Config) -> Result<i32> {
    let files = &config.files;
    require(&files.commits, "commit store")?;
    let store = CommitStore::load(&files.commits)?;
    let gateway = config.llm.build()?;
    if store.embedder != gateway.embedder_id() {
        return Err(Error::Config(format!(
            "commit store was embedded with `{}` but the configured embedder is `{}`",
            store.embedder,
            gateway.embedder_id()
        )));
    }
    let mut pool_config = config.pool.clone();
    pool_config.seed = config.seed;
    let pool = build_pool(&store.commits, &gateway, &pool_config)?;
    pool.save(&files.pool)?;
    config.write_echo(&echo_path(&files.pool))?;
    println!(
        "{} ideas, {} thoughts, {} refine rounds{} -> {}",
        pool.ideas.len(),
        pool.thought_count(),
        pool.provenance.refine_rounds,
        if pool.provenance.converged { "" } else { " (not converged)" },
        files.pool.display()
    );
    Ok(0)
}

fn cmd_index(config: &Config) -> Result<i32> {
    let files = &config.files;
    let out = files
        .index
        .as_ref()
        .ok_or_else(|| Error::Config("files.index must name the output index".into()))?;
    require(&files.corpus, "corpus manifest")?;
    let docs = load_corpus(&files.corpus)?;
    let gateway = config.llm.build()?;
    let index = index_documents(&docs, config.corpus.chunk_size, config.corpus.overlap, &gateway)?;
    index.save(out)?;
    config.write_echo(&echo_path(out))?;
    println!("{} documents, {} chunks -> {}", docs.len(), index.chunks.len(), out.display());
    Ok(0)
}

fn load_tasks(config: &Config) -> Result<Vec<KernelTask>> {
    let paths = config.task_files()?;
    if paths.is_empty() {
        return Err(Error::Config("files.tasks names no task files".into()));
    }
    paths.iter().map(|p| KernelTask::load(p)).collect()
}

fn cmd_run(config: &Config) -> Result<i32> {
    let files = &config.files;
    if !files.pool.exists() {
        return Err(Error::Environment(format!("idea pool {} does not exist", files.pool.display())));
    }
    let pool = IdeaPool::load(&files.pool)?;
    let docs = match &files.index {
        Some(p) if !p.exists() => {
            return Err(Error::Environment(format!("retrieval index {} does not exist", p.display())))
        }
        Some(p) => Some(RetrievalIndex::load(p)?),
        None => None,
    };
    let tasks = load_tasks(config)?;
    let gateway = config.llm.build()?;
    if pool.embedding_dim != gateway.embedding_dim() {
        return Err(Error::Config(format!(
            "pool embeddings have dimension {} but the embedder produces {}",
            pool.embedding_dim,
            gateway.embedding_dim()
        )));
    }
    let harness = EvalHarness::new(config.executor.clone())?;
    config.write_echo(&files.run_dir.join("config.json"))?;
    let orchestrator = Orchestrator {
        run: &config.run,
        search: &config.search,
        target: &config.target,
        gateway: &gateway,
        harness: &harness,
        docs: docs.as_ref(),
        runner: &EohRunner,
    };
    let result = orchestrator.run_all(tasks, &pool, &files.run_dir)?;
    for t in &result.tasks {
        let series: Vec<String> = t.series.iter().map(|s| format!("{:.4}", s.best_so_far)).collect();
        println!("{}: best {:.4} ({}) series [{}]", t.task_id, t.best_speedup, t.best_id, series.join(", "));
    }
    let speedups: Vec<f64> = result.tasks.iter().map(|t| t.best_speedup).collect();
    if let Some(s) = report::summarize(&speedups) {
        println!(
            "mean {:.4} max {:.4} p75 {:.4} p50 {:.4} p25 {:.4} success {}/{}",
            s.mean, s.max, s.p75, s.p50, s.p25, s.success, s.total
        );
    }
    let ok = result.completed && speedups.iter().all(|s| *s >= 1.0);
    Ok(if ok { 0 } else { 1 })
}

fn cmd_evaluate(config: &Config, positional: &[String]) -> Result<i32> {
    let kernel = positional
        .first()
        .map(PathBuf::from)
        .or_else(|| config.files.kernel.clone())
        .ok_or_else(|| Error::Config("name a kernel source (argument or files.kernel)".into()))?;
    require(&kernel, "kernel source")?;
    let task = load_tasks(config)?.remove(0);
    let harness = EvalHarness::new(config.executor.clone())?;
    let source = util::read_to_string(&kernel)?;
    let result = harness.evaluate(&source, &task)?;
    println!("{}", serde_json::to_string_pretty(&result).expect("result serializes"));
    Ok(if result.correct { 0 } else { 1 })
}

fn cmd_report(config: &Config, positional: &[String]) -> Result<i32> {
    let mut runs = config.files.runs.clone();
    runs.extend(positional.iter().map(PathBuf::from));
    if runs.is_empty() {
        return Err(Error::State("no run directories given".into()));
    }
    let out = &config.files.report_dir;
    let report = report::write_report(&runs, out)?;
    config.write_echo(&out.join("config.json"))?;
    println!("group,mean,max,p75,p50,p25,success,total");
    for (g, s) in &report.groups {
        println!("{g},{:.4},{:.4},{:.4},{:.4},{:.4},{},{}", s.mean, s.max, s.p75, s.p50, s.p25, s.success, s.total);
    }
    Ok(0)
}

/// Runs one invocation and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (args, name) = match &cli.command {
        Command::Mine(a) => (a, "mine"),
        Command::BuildPool(a) => (a, "build-pool"),
        Command::Index(a) => (a, "index"),
        Command::Run(a) => (a, "run"),
        Command::Evaluate(a) => (a, "evaluate"),
        Command::Report(a) => (a, "report"),
    };
    let outcome = split_args(&args.rest).and_then(|inv| {
        if !inv.positional.is_empty() && !matches!(cli.command, Command::Report(_) | Command::Evaluate(_)) {
            return Err(Error::Config(format!("unexpected argument `{}`", inv.positional[0])));
        }
        let config = Config::load(inv.config.as_deref(), &inv.overrides)?;
        match cli.command {
            Command::Mine(_) => cmd_mine(&config),
            Command::BuildPool(_) => cmd_build_pool(&config),
            Command::Index(_) => cmd_index(&config),
            Command::Run(_) => cmd_run(&config),
            Command::Evaluate(_) => cmd_evaluate(&config, &inv.positional),
            Command::Report(_) => cmd_report(&config, &inv.positional),
        }
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("kevo {name}: {e}");
            exit_code(&e)
        }
    }
}
