//! The outer loop: per task, repeated rounds of idea-guided searches that
//! grow a kernel database and feed efficiency back into the idea pool.

use std::fmt::Write as _;
use std::panic::AssertUnwindSafe;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eoh::{run_search, SearchConfig, SearchDeps, SearchOutcome, Target};
use crate::error::{Error, Result};
use crate::eval::{EvalHarness, KernelTask};
use crate::kernel::{KernelCandidate, KernelDatabase, Origin};
use crate::llm::Gateway;
use crate::pool::{sample_idea, Idea, IdeaPool};
use crate::rag::RetrievalIndex;
use crate::report::{IterationSummary, RunResult, TaskResult};
use crate::util::{self, derive_seed, fnv1a64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Concurrent searches per iteration.
    pub searches: usize,
    /// Search winners archived per iteration.
    pub top_k: usize,
    pub iterations: usize,
    /// Set from the top-level `seed`.
    #[serde(skip)]
    pub seed: u64,
    /// Softmax temperature for picking the kernel a search starts from.
    pub kernel_temperature: f64,
    /// Weight of the newest usage in the efficiency moving average.
    pub alpha: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            searches: 3,
            top_k: 3,
            iterations: 5,
            seed: 0,
            kernel_temperature: 1.0,
            alpha: 0.3,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.searches == 0 || self.top_k == 0 {
            return Err(Error::Config("searches and top_k must be at least 1".into()));
        }
        if !(self.kernel_temperature > 0.0) {
            return Err(Error::Config("kernel_temperature must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

/// What one search is asked to do.
pub struct SearchJob<'a> {
    pub iteration: usize,
    pub index: usize,
    pub reference: &'a KernelCandidate,
    pub idea: &'a Idea,
    pub config: &'a SearchConfig,
    pub deps: SearchDeps<'a>,
    pub seed: u64,
}

/// Runs one search. Implementations must be deterministic in the job.
pub trait SearchRunner: Sync {
    fn run(&self, job: &SearchJob<'_>) -> Result<SearchOutcome>;
}

/// The evolutionary search.
pub struct EohRunner;

impl SearchRunner for EohRunner {
    fn run(&self, job: &SearchJob<'_>) -> Result<SearchOutcome> {
        let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
        run_search(job.reference, job.idea, job.config, job.deps, &mut rng)
    }
}

/// Per-task state carried across iterations.
#[derive(Debug, Clone)]
pub struct TaskState {
    pub task: KernelTask,
    pub db: KernelDatabase,
    pub pool: IdeaPool,
    pub iteration: usize,
    pub series: Vec<IterationSummary>,
}

impl TaskState {
    fn summary(&self) -> TaskResult {
        let best = self.db.best();
        TaskResult {
            task_id: self.task.task_id.clone(),
            category: self.task.category,
            best_id: best.id.clone(),
            best_speedup: best.speedup(),
            series: self.series.clone(),
        }
    }
}

/// Summary written next to each search's trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub iteration: usize,
    pub index: usize,
    pub seed: u64,
    pub idea_id: String,
    pub reference_id: String,
    pub outcome: Option<SearchOutcome>,
    pub error: Option<String>,
}

pub struct Orchestrator<'a> {
    pub run: &'a RunConfig,
    pub search: &'a SearchConfig,
    pub target: &'a Target,
    pub gateway: &'a Gateway,
    pub harness: &'a EvalHarness,
    pub docs: Option<&'a RetrievalIndex>,
    pub runner: &'a dyn SearchRunner,
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "search panicked".into())
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

impl<'a> Orchestrator<'a> {
    /// Evaluates the reference kernel and starts a database holding only it.
    pub fn init_task(&self, task: KernelTask, pool: IdeaPool) -> Result<TaskState> {
        pool.validate()?;
        let eval = self.harness.evaluate_reference(&task)?;
        let reference = KernelCandidate::new(
            "ref",
            "reference implementation",
            task.reference_source.clone(),
            eval,
            Origin::default(),
        );
        let db = KernelDatabase::new(task.task_id.clone(), reference)?;
        let series = vec![IterationSummary {
            iteration: 0,
            completed_searches: 0,
            failed_searches: 0,
            iteration_best: None,
            added: 0,
            database_size: 1,
            best_so_far: db.best().speedup(),
        }];
        Ok(TaskState {
            task,
            db,
            pool,
            iteration: 0,
            series,
        })
    }

    /// One iteration: `searches` concurrent searches, archive of the top
    /// winners, pool update. Fails only when every search fails.
    pub fn run_iteration(&self, state: &mut TaskState, task_dir: Option<&Path>) -> Result<IterationSummary> {
        self.run.validate()?;
        let t = state.iteration + 1;
        let task_key = fnv1a64(state.task.task_id.as_bytes());
        let mut plans = Vec::with_capacity(self.run.searches);
        for i in 0..self.run.searches {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.run.seed, &[task_key, t as u64, i as u64]));
            let idea = sample_idea(&state.pool, &mut rng)?.clone();
            let reference = state.db.sample(self.run.kernel_temperature, &mut rng).clone();
            let seed: u64 = rng.random();
            plans.push((idea, reference, seed, self.gateway.session()));
        }

        let deps_for = |gateway| SearchDeps {
            gateway,
            harness: self.harness,
            task: &state.task,
            target: self.target,
            docs: self.docs,
        };
        let results: Vec<Result<SearchOutcome>> = std::thread::scope(|scope| {
            let handles: Vec<_> = plans
                .iter()
                .enumerate()
                .map(|(i, (idea, reference, seed, session))| {
                    let job = SearchJob {
                        iteration: t,
                        index: i,
                        reference,
                        idea,
                        config: self.search,
                        deps: deps_for(session),
                        seed: *seed,
                    };
                    scope.spawn(move || {
                        std::panic::catch_unwind(AssertUnwindSafe(|| self.runner.run(&job)))
                            .unwrap_or_else(|p| Err(Error::State(panic_message(p))))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|p| Err(Error::State(panic_message(p)))))
                .collect()
        });

        if let Some(dir) = task_dir {
            let dir = dir.join("iterations").join(format!("{t:02}"));
            for (i, ((idea, reference, seed, session), result)) in plans.iter().zip(&results).enumerate() {
                let record = SearchRecord {
                    iteration: t,
                    index: i,
                    seed: *seed,
                    idea_id: idea.id.clone(),
                    reference_id: reference.id.clone(),
                    outcome: result.as_ref().ok().cloned(),
                    error: result.as_ref().err().map(ToString::to_string),
                };
                if let Some(outcome) = &record.outcome {
                    util::write_string(&dir.join(format!("search-{i}.trace.jsonl")), &jsonl(&outcome.trace))?;
                }
                util::write_json(&dir.join(format!("search-{i}.json")), &record)?;
                session.write_replay_log(&dir.join(format!("search-{i}.replay.jsonl")))?;
            }
        }

        let failed = results.iter().filter(|r| r.is_err()).count();
        for (i, r) in results.iter().enumerate() {
            if let Err(e) = r {
                tracing::warn!(task = %state.task.task_id, iteration = t, search = i, error = %e, "search failed");
            }
        }
        if failed == results.len() {
            let first = results.into_iter().find_map(Result::err).expect("all searches failed");
            return Err(first);
        }

        let mut winners: Vec<(usize, KernelCandidate)> = results
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().ok().map(|o| (i, o)))
            .filter(|(_, o)| o.best.is_valid())
            .map(|(i, o)| (i, o.best_candidate(t, i)))
            .collect();
        winners.sort_by(|(ia, a), (ib, b)| crate::kernel::better(a, b).then(ia.cmp(ib)));
        let mut seen = std::collections::BTreeSet::new();
        winners.retain(|(_, c)| seen.insert(c.source_hash.clone()));
        let iteration_best = winners.first().map(|(_, c)| c.speedup());
        let mut added = 0;
        for (_, c) in winners.into_iter().take(self.run.top_k) {
            if state.db.insert(c) {
                added += 1;
            }
        }

        let shares: Vec<(String, f64)> = results
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .flat_map(|o| o.usage.shares.iter().cloned())
            .collect();
        state.pool.update_efficiencies(&shares, self.run.alpha)?;

        state.iteration = t;
        let summary = IterationSummary {
            iteration: t,
            completed_searches: results.len() - failed,
            failed_searches: failed,
            iteration_best,
            added,
            database_size: state.db.len(),
            best_so_far: state.db.best().speedup(),
        };
        state.series.push(summary.clone());
        tracing::info!(
            task = %state.task.task_id,
            iteration = t,
            best = summary.best_so_far,
            added,
            failed,
            "iteration done"
        );
        Ok(summary)
    }

    /// All iterations for one task; artifacts go under `task_dir`.
    pub fn run_task(&self, task: KernelTask, pool: IdeaPool, task_dir: Option<&Path>) -> Result<TaskState> {
        let mut state = self.init_task(task, pool)?;
        for _ in 0..self.run.iterations {
            self.run_iteration(&mut state, task_dir)?;
            if let Some(dir) = task_dir {
                write_task_files(&state, dir)?;
            }
        }
        if let Some(dir) = task_dir {
            write_task_files(&state, dir)?;
        }
        Ok(state)
    }

    /// Runs every task from the same starting pool and writes the run
    /// directory. `result.json` is written last and marks completion.
    pub fn run_all(&self, tasks: Vec<KernelTask>, pool: &IdeaPool, out_dir: &Path) -> Result<RunResult> {
        self.run.validate()?;
        self.search.validate()?;
        let marker = out_dir.join(RunResult::FILE);
        if marker.exists() {
            std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
        }
        util::write_json(&out_dir.join("pool.json"), pool)?;
        let mut results = Vec::with_capacity(tasks.len());
        for task in tasks {
            let dir = out_dir.join("tasks").join(&task.task_id);
            let state = self.run_task(task, pool.clone(), Some(&dir))?;
            results.push(state.summary());
        }
        let result = RunResult {
            schema: RunResult::SCHEMA.into(),
            completed: true,
            tasks: results,
        };
        util::write_json(&marker, &result)?;
        Ok(result)
    }
}

fn write_task_files(state: &TaskState, dir: &Path) -> Result<()> {
    util::write_json(&dir.join("database.json"), &state.db)?;
    util::write_json(&dir.join("pool.json"), &state.pool)?;
    util::write_string(&dir.join("best.c"), &state.db.best().source)?;
    let mut csv = String::from("iteration,best_so_far,iteration_best,added,database_size,completed,failed\n");
    for s in &state.series {
        let ib = s.iteration_best.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            csv,
            "{},{},{ib},{},{},{},{}",
            s.iteration, s.best_so_far, s.added, s.database_size, s.completed_searches, s.failed_searches
        )
        .expect("string write");
    }
    util::write_string(&dir.join("convergence.csv"), &csv)
}
