//! Compile, run, compare and time candidate kernels against a reference.

mod compare;
mod mock;
mod process;
mod stats;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

pub use compare::{check_correctness, parse_output, relative_deviation, HarnessOutput};
pub use mock::{MockExecRule, MockExecutor, MockExecutorConfig};
pub use process::ProcessExecutor;
pub use stats::LatencyStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskCategory {
    #[default]
    General,
    #[serde(rename = "nn-group-1")]
    NnGroup1,
    #[serde(rename = "nn-group-2")]
    NnGroup2,
    #[serde(rename = "nn-group-3")]
    NnGroup3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTask {
    pub task_id: String,
    /// Operation name used in prompts, e.g. `Mish`.
    pub operation: String,
    #[serde(default)]
    pub category: TaskCategory,
    pub reference_source: String,
    pub harness_source: String,
    /// Shapes, dtypes and input seed; handed to the driver as `KEVO_INPUT_SPEC`.
    #[serde(default)]
    pub input_spec: serde_json::Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    task_id: String,
    operation: Option<String>,
    #[serde(default)]
    category: TaskCategory,
    reference: Option<PathBuf>,
    reference_source: Option<String>,
    harness: Option<PathBuf>,
    harness_source: Option<String>,
    #[serde(default)]
    input_spec: serde_json::Value,
}

fn inline_or_file(inline: Option<String>, path: Option<PathBuf>, base: &Path, what: &str) -> Result<String> {
    match (inline, path) {
        (Some(text), None) => Ok(text),
        (None, Some(p)) => util::read_to_string(&base.join(p)),
        _ => Err(Error::Config(format!("task needs exactly one of `{what}` or `{what}_source`"))),
    }
}

impl KernelTask {
    /// Loads a task description (TOML or JSON). Source paths are relative to
    /// the task file.
    pub fn load(path: &Path) -> Result<Self> {
        let value = util::read_structured(path)?;
        let file: TaskFile = serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(KernelTask {
            operation: file.operation.unwrap_or_else(|| file.task_id.clone()),
            reference_source: inline_or_file(file.reference_source, file.reference, base, "reference")?,
            harness_source: inline_or_file(file.harness_source, file.harness, base, "harness")?,
            task_id: file.task_id,
            category: file.category,
            input_spec: file.input_spec,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Compile,
    Run,
    Compare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: Stage,
    pub detail: String,
}

/// Verdict for one candidate. `speedup` is present exactly when `correct`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub correct: bool,
    pub max_rel_dev: Option<f64>,
    pub latency: Option<LatencyStats>,
    pub speedup: Option<f64>,
    pub failure: Option<Failure>,
}

impl EvalResult {
    pub fn passed(max_rel_dev: f64, latency: LatencyStats, speedup: f64) -> Self {
        assert!(speedup.is_finite() && speedup > 0.0, "speedup must be positive, got {speedup}");
        EvalResult {
            correct: true,
            max_rel_dev: Some(max_rel_dev),
            latency: Some(latency),
            speedup: Some(speedup),
            failure: None,
        }
    }

    pub fn failed(stage: Stage, detail: impl Into<String>, max_rel_dev: Option<f64>) -> Self {
        EvalResult {
            correct: false,
            max_rel_dev,
            latency: None,
            speedup: None,
            failure: Some(Failure {
                stage,
                detail: detail.into(),
            }),
        }
    }

    /// Speedup for correct candidates, negative infinity otherwise.
    pub fn fitness(&self) -> f64 {
        match (self.correct, self.speedup) {
            (true, Some(s)) => s,
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn mean_latency_ns(&self) -> Option<f64> {
        self.latency.as_ref().map(|l| l.mean_ns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutorKind {
    #[default]
    Local,
    Emulator,
    Remote,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutorConfig {
    pub kind: ExecutorKind,
    pub compiler: String,
    pub flags: Vec<String>,
    /// Placeholders: `{compiler}`, `{flags}` (expands to several arguments),
    /// `{out}`, `{harness}`, `{kernel}`, `{dir}`, `{key}`.
    pub compile_argv: Vec<String>,
    /// Defaults depend on `kind`; `{bin}` is the compiled binary.
    pub run_argv: Option<Vec<String>>,
    /// Run once per binary before its first execution, e.g. a copy to a board.
    pub deploy_argv: Option<Vec<String>>,
    /// Replaces the built-in buffer sweep used to evict caches.
    pub flush_argv: Option<Vec<String>>,
    pub flush_buffer_bytes: usize,
    pub settle_ms: u64,
    pub warm_runs: usize,
    pub measured_runs: usize,
    pub compile_timeout_s: f64,
    pub run_timeout_s: f64,
    pub epsilon: f64,
    pub abs_floor: f64,
    /// Serialize timing runs behind a target lock. Defaults to true for every
    /// kind except `mock`.
    pub exclusive: Option<bool>,
    pub baseline_ttl_s: u64,
    /// Baselines and results are persisted here when set.
    pub cache_dir: Option<PathBuf>,
    /// Build directory; a temporary directory when unset.
    pub work_dir: Option<PathBuf>,
    pub mock: MockExecutorConfig,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig {
            kind: ExecutorKind::Local,
            compiler: "gcc".into(),
            flags: vec!["-O3".into(), "-march=rv64gcv".into()],
            compile_argv: ["{compiler}", "{flags}", "-o", "{out}", "{harness}", "{kernel}", "-lm"]
                .map(String::from)
                .to_vec(),
            run_argv: None,
            deploy_argv: None,
            flush_argv: None,
            flush_buffer_bytes: 8 << 20,
            settle_ms: 2000,
            warm_runs: 10,
            measured_runs: 50,
            compile_timeout_s: 120.0,
            run_timeout_s: 60.0,
            epsilon: 0.01,
            abs_floor: 1e-6,
            exclusive: None,
            baseline_ttl_s: 24 * 3600,
            cache_dir: None,
            work_dir: None,
            mock: MockExecutorConfig::default(),
        }
    }
}

impl ExecutorConfig {
    pub fn mock() -> Self {
        ExecutorConfig {
            kind: ExecutorKind::Mock,
            settle_ms: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.measured_runs == 0 {
            return Err(Error::Config("measured_runs must be at least 1".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        if !(self.abs_floor > 0.0) {
            return Err(Error::Config(format!("abs_floor must be positive, got {}", self.abs_floor)));
        }
        if self.kind == ExecutorKind::Remote && self.run_argv.is_none() {
            return Err(Error::Config("remote executor needs run_argv".into()));
        }
        Ok(())
    }

    pub fn is_exclusive(&self) -> bool {
        self.exclusive.unwrap_or(self.kind != ExecutorKind::Mock)
    }

    /// Hash of every setting that can change a measurement.
    pub fn fingerprint(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            for key in ["cache_dir", "work_dir", "baseline_ttl_s"] {
                map.remove(key);
            }
        }
        util::sha256_hex(value.to_string())[..16].to_string()
    }

    pub fn build(&self) -> Result<Arc<dyn Executor>> {
        self.validate()?;
        Ok(match self.kind {
            ExecutorKind::Mock => Arc::new(MockExecutor::new(self.mock.clone())),
            _ => Arc::new(ProcessExecutor::new(self.clone())?),
        })
    }
}

/// A compiled candidate. `key` identifies source plus harness.
#[derive(Debug, Clone, PartialEq)]
pub struct Binary {
    pub key: String,
    pub path: Option<PathBuf>,
    pub source: Arc<str>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Smoke,
    Warm(usize),
    Measured(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub stdout: String,
    pub wall_ns: u64,
}

/// `Err` carries a candidate-level failure detail.
pub type Outcome<T> = std::result::Result<T, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExecutorStats {
    pub compiles: usize,
    pub executions: usize,
    pub flushes: usize,
}

/// Backend that builds and runs binaries. Candidate failures are `Ok(Err(_))`;
/// `Err` is reserved for a broken environment.
pub trait Executor: Send + Sync {
    fn compile(&self, source: &str, task: &KernelTask) -> Result<Outcome<Binary>>;
    fn run(&self, binary: &Binary, task: &KernelTask, kind: RunKind) -> Result<Outcome<RunOutput>>;
    fn flush_caches(&self) -> Result<()>;
    fn settle(&self, delay: Duration) {
        std::thread::sleep(delay);
    }
    fn stats(&self) -> ExecutorStats;
}

/// Reference outputs and latency for one task on one executor setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub task_id: String,
    pub fingerprint: String,
    pub reference_hash: String,
    pub outputs: Vec<f64>,
    pub latency: LatencyStats,
    pub measured_at: u64,
}

fn now_s() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub struct EvalHarness {
    config: ExecutorConfig,
    executor: Arc<dyn Executor>,
    fingerprint: String,
    compiled: Mutex<HashMap<String, Outcome<Binary>>>,
    baselines: Mutex<HashMap<String, Arc<Baseline>>>,
    target_lock: Mutex<()>,
}

impl std::fmt::Debug for EvalHarness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EvalHarness")
            .field("kind", &self.config.kind)
            .field("fingerprint", &self.fingerprint)
            .finish()
    }
}

impl EvalHarness {
    pub fn new(config: ExecutorConfig) -> Result<Self> {
        let executor = config.build()?;
        Ok(Self::with_executor(config, executor))
    }

    pub fn with_executor(config: ExecutorConfig, executor: Arc<dyn Executor>) -> Self {
        EvalHarness {
            fingerprint: config.fingerprint(),
            config,
            executor,
            compiled: Mutex::new(HashMap::new()),
            baselines: Mutex::new(HashMap::new()),
            target_lock: Mutex::new(()),
        }
    }

    pub fn config(&self) -> &ExecutorConfig {
        &self.config
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn executor_stats(&self) -> ExecutorStats {
        self.executor.stats()
    }

    fn binary_key(source: &str, task: &KernelTask) -> String {
        util::sha256_hex(format!(
            "{}\0{}\0{}",
            task.task_id,
            util::sha256_hex(&task.harness_source),
            util::sha256_hex(source)
        ))
    }

    /// Compiles once per (source, task); failures are cached too.
    pub fn compile_kernel(&self, source: &str, task: &KernelTask) -> Result<Outcome<Binary>> {
        let key = Self::binary_key(source, task);
        if let Some(hit) = self.compiled.lock().expect("compile cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let outcome = self.executor.compile(source, task)?;
        self.compiled
            .lock()
            .expect("compile cache poisoned")
            .insert(key, outcome.clone());
        Ok(outcome)
    }

    /// Flush, settle, warm-up runs, then timed runs. Timing comes from the
    /// driver's `LAT_NS` line, or wall-clock time when the driver omits it.
    pub fn measure_latency(&self, binary: &Binary, task: &KernelTask) -> Result<Outcome<LatencyStats>> {
        let _guard = self
            .config
            .is_exclusive()
            .then(|| self.target_lock.lock().unwrap_or_else(|p| p.into_inner()));
        self.executor.flush_caches()?;
        self.executor.settle(Duration::from_millis(self.config.settle_ms));
        for i in 0..self.config.warm_runs {
            if let Err(detail) = self.executor.run(binary, task, RunKind::Warm(i))? {
                return Ok(Err(format!("warm run {i}: {detail}")));
            }
        }
        let mut samples = Vec::with_capacity(self.config.measured_runs);
        for i in 0..self.config.measured_runs {
            let out = match self.executor.run(binary, task, RunKind::Measured(i))? {
                Ok(out) => out,
                Err(detail) => return Ok(Err(format!("measured run {i}: {detail}"))),
            };
            let parsed = match parse_output(&out.stdout) {
                Ok(p) => p,
                Err(e) => return Ok(Err(format!("measured run {i}: {e}"))),
            };
            samples.push(parsed.latency_ns.unwrap_or(out.wall_ns) as f64);
        }
        let stats = LatencyStats::from_samples(samples).expect("at least one measured run");
        if !(stats.mean_ns > 0.0) {
            return Ok(Err(format!("non-positive mean latency {}", stats.mean_ns)));
        }
        Ok(Ok(stats))
    }

    fn smoke(&self, source: &str, task: &KernelTask) -> Result<Result<(Binary, Vec<f64>), Failure>> {
        let binary = match self.compile_kernel(source, task)? {
            Ok(b) => b,
            Err(detail) => return Ok(Err(Failure { stage: Stage::Compile, detail })),
        };
        let run = match self.executor.run(&binary, task, RunKind::Smoke)? {
            Ok(out) => out,
            Err(detail) => return Ok(Err(Failure { stage: Stage::Run, detail })),
        };
        match parse_output(&run.stdout) {
            Ok(parsed) => Ok(Ok((binary, parsed.values))),
            Err(e) => Ok(Err(Failure {
                stage: Stage::Run,
                detail: format!("malformed harness output: {e}"),
            })),
        }
    }

    fn baseline_path(&self, task: &KernelTask) -> Option<PathBuf> {
        self.config.cache_dir.as_ref().map(|d| {
            d.join("baselines")
                .join(format!("{}-{}.json", task.task_id, self.fingerprint))
        })
    }

    /// The reference measurement, from memory, the on-disk cache (within its
    /// TTL), or a fresh run. A failing reference is `Error::Reference`.
    pub fn baseline(&self, task: &KernelTask) -> Result<Arc<Baseline>> {
        if let Some(b) = self.baselines.lock().expect("baseline cache poisoned").get(&task.task_id) {
            return Ok(Arc::clone(b));
        }
        let reference_hash = util::sha256_hex(&task.reference_source);
        let path = self.baseline_path(task);
        let cached = path
            .as_deref()
            .filter(|p| p.exists())
            .and_then(|p| util::read_json::<Baseline>(p).ok())
            .filter(|b| {
                b.reference_hash == reference_hash
                    && b.fingerprint == self.fingerprint
                    && now_s().saturating_sub(b.measured_at) <= self.config.baseline_ttl_s
            });
        let baseline = match cached {
            Some(b) => b,
            None => {
                let fail = |detail: String| Error::Reference(format!("task `{}`: {detail}", task.task_id));
                let (binary, outputs) = self
                    .smoke(&task.reference_source, task)?
                    .map_err(|f| fail(format!("{:?} stage: {}", f.stage, f.detail)))?;
                let latency = self.measure_latency(&binary, task)?.map_err(fail)?;
                let b = Baseline {
                    task_id: task.task_id.clone(),
                    fingerprint: self.fingerprint.clone(),
                    reference_hash,
                    outputs,
                    latency,
                    measured_at: now_s(),
                };
                if let Some(p) = &path {
                    util::write_json(p, &b)?;
                }
                b
            }
        };
        let baseline = Arc::new(baseline);
        self.baselines
            .lock()
            .expect("baseline cache poisoned")
            .insert(task.task_id.clone(), Arc::clone(&baseline));
        Ok(baseline)
    }

    /// The reference judged against itself: correct, speedup 1.
    pub fn evaluate_reference(&self, task: &KernelTask) -> Result<EvalResult> {
        let b = self.baseline(task)?;
        Ok(EvalResult::passed(0.0, b.latency.clone(), 1.0))
    }

    fn result_path(&self, source: &str, task: &KernelTask) -> Option<PathBuf> {
        self.config.cache_dir.as_ref().map(|d| {
            let key = util::sha256_hex(format!(
                "{}|{}|{}",
                util::sha256_hex(source),
                task.task_id,
                self.fingerprint
            ));
            d.join("results").join(format!("{key}.json"))
        })
    }

    /// Full pipeline for one candidate. Only environment and reference
    /// problems are errors; candidate failures come back as results.
    pub fn evaluate(&self, source: &str, task: &KernelTask) -> Result<EvalResult> {
        let baseline = self.baseline(task)?;
        let cache = self.result_path(source, task);
        if let Some(hit) = cache
            .as_deref()
            .filter(|p| p.exists())
            .and_then(|p| util::read_json::<EvalResult>(p).ok())
        {
            return Ok(hit);
        }
        let result = self.evaluate_uncached(source, task, &baseline)?;
        if let Some(p) = &cache {
            util::write_json(p, &result)?;
        }
        Ok(result)
    }

    fn evaluate_uncached(&self, source: &str, task: &KernelTask, baseline: &Baseline) -> Result<EvalResult> {
        let (binary, outputs) = match self.smoke(source, task)? {
            Ok(ok) => ok,
            Err(f) => return Ok(EvalResult::failed(f.stage, f.detail, None)),
        };
        let (correct, dev) = match check_correctness(
            &outputs,
            &baseline.outputs,
            self.config.epsilon,
            self.config.abs_floor,
        ) {
            Ok(v) => v,
            Err(e) => return Ok(EvalResult::failed(Stage::Compare, e.to_string(), None)),
        };
        if !correct {
            return Ok(EvalResult::failed(
                Stage::Compare,
                format!("max relative deviation {dev} exceeds {}", self.config.epsilon),
                Some(dev),
            ));
        }
        match self.measure_latency(&binary, task)? {
            Ok(latency) => {
                let speedup = baseline.latency.mean_ns / latency.mean_ns;
                Ok(EvalResult::passed(dev, latency, speedup))
            }
            Err(detail) => Ok(EvalResult::failed(Stage::Run, detail, Some(dev))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn task() -> KernelTask {
        KernelTask {
            task_id: "toy".into(),
            operation: "toy".into(),
            category: TaskCategory::General,
            reference_source: "ref kernel\n// @mock latency_ns=1000\n".into(),
            harness_source: "driver".into(),
            input_spec: serde_json::Value::Null,
        }
    }

    fn harness() -> EvalHarness {
        EvalHarness::new(ExecutorConfig::mock()).unwrap()
    }

    #[test]
    fn identity_speedup_is_exactly_one() {
        let h = harness();
        let t = task();
        let r = h.evaluate(&t.reference_source, &t).unwrap();
        assert!(r.correct);
        assert_eq!(r.speedup, Some(1.0));
    }

    #[test]
    fn half_latency_doubles_speedup() {
        let h = harness();
        let r = h.evaluate("fast // @mock latency_ns=500", &task()).unwrap();
        assert_eq!(r.speedup, Some(2.0));
    }

    #[test]
    fn wrong_values_gated_at_compare() {
        let h = harness();
        let r = h.evaluate("bad // @mock scale=1.5", &task()).unwrap();
        assert!(!r.correct);
        assert_eq!(r.speedup, None);
        assert_eq!(r.failure.unwrap().stage, Stage::Compare);
        assert!((r.max_rel_dev.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn compile_and_run_failures() {
        let h = harness();
        let r = h.evaluate("x // @mock compile_error=boom", &task()).unwrap();
        assert_eq!(r.failure.as_ref().unwrap().stage, Stage::Compile);
        assert!(r.failure.unwrap().detail.contains("boom"));
        let r = h.evaluate("x // @mock run_error", &task()).unwrap();
        assert_eq!(r.failure.unwrap().stage, Stage::Run);
        let r = h.evaluate("x // @mock outputs=1,2", &task()).unwrap();
        assert_eq!(r.failure.unwrap().stage, Stage::Compare);
    }

    #[test]
    fn compile_cache_hits() {
        let h = harness();
        let t = task();
        h.compile_kernel("a", &t).unwrap().unwrap();
        h.compile_kernel("a", &t).unwrap().unwrap();
        assert_eq!(h.executor_stats().compiles, 1);
    }

    #[test]
    fn schedule_executes_sixty_times() {
        let h = harness();
        let t = task();
        let bin = h.compile_kernel("a", &t).unwrap().unwrap();
        let before = h.executor_stats().executions;
        let stats = h.measure_latency(&bin, &t).unwrap().unwrap();
        assert_eq!(h.executor_stats().executions - before, 60);
        assert_eq!(stats.samples_ns.len(), 50);
    }

    #[test]
    fn scripted_sequence_statistics() {
        let h = harness();
        let t = task();
        let seq: Vec<String> = (1..=50).map(|i| i.to_string()).collect();
        let src = format!("k // @mock latency_seq={}", seq.join(","));
        let bin = h.compile_kernel(&src, &t).unwrap().unwrap();
        let stats = h.measure_latency(&bin, &t).unwrap().unwrap();
        assert_eq!(stats.mean_ns, 25.5);
        assert_eq!(stats.median_ns, 25.5);
        assert_eq!(stats.recompute().unwrap(), stats);
    }

    #[test]
    fn broken_reference_is_reference_error() {
        let h = harness();
        let mut t = task();
        t.reference_source = "// @mock compile_error".into();
        assert!(matches!(h.evaluate("x", &t), Err(Error::Reference(_))));
    }

    #[test]
    fn baseline_and_results_persist() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExecutorConfig {
            cache_dir: Some(dir.path().to_path_buf()),
            ..ExecutorConfig::mock()
        };
        let t = task();
        let first = EvalHarness::new(cfg.clone()).unwrap();
        let r1 = first.evaluate("y // @mock latency_ns=250", &t).unwrap();
        let second = EvalHarness::new(cfg).unwrap();
        let r2 = second.evaluate("y // @mock latency_ns=250", &t).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(second.executor_stats().executions, 0);
        assert_eq!(r2.speedup, Some(4.0));
    }

    #[test]
    fn fingerprint_tracks_measurement_settings() {
        let a = ExecutorConfig::mock();
        let b = ExecutorConfig {
            cache_dir: Some("/tmp/x".into()),
            ..a.clone()
        };
        let c = ExecutorConfig {
            flags: vec!["-O2".into()],
            ..a.clone()
        };
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn task_file_loading() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("ref.c"), "int f;").unwrap();
        std::fs::write(
            dir.path().join("task.toml"),
            "task_id = \"t\"\nreference = \"ref.c\"\nharness_source = \"drv\"\ncategory = \"nn-group-2\"\n",
        )
        .unwrap();
        let t = KernelTask::load(&dir.path().join("task.toml")).unwrap();
        assert_eq!(t.reference_source, "int f;");
        assert_eq!(t.operation, "t");
        assert_eq!(t.category, TaskCategory::NnGroup2);
        std::fs::write(dir.path().join("bad.toml"), "task_id = \"t\"\nharness_source = \"d\"\n").unwrap();
        assert!(KernelTask::load(&dir.path().join("bad.toml")).is_err());
    }
}
