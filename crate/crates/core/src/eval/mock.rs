//! Deterministic executor driven by `@mock` directives embedded in the
//! candidate source, e.g. `// @mock latency_ns=500 scale=1.5`.
//!
//! Directives: `compile_error[=msg]`, `run_error[=msg]`, `latency_ns=N`,
//! `latency_seq=a,b,...` (indexed by measured run), `outputs=x,y,...`,
//! `scale=f`, `no_latency`, `malformed`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Binary, Executor, ExecutorStats, KernelTask, Outcome, RunKind, RunOutput};
use crate::error::Result;
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockExecRule {
    /// Applies when the source contains this text.
    pub contains: String,
    pub directives: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockExecutorConfig {
    pub default_latency_ns: u64,
    pub default_outputs: Vec<f64>,
    pub rules: Vec<MockExecRule>,
}

impl Default for MockExecutorConfig {
    fn default() -> Self {
        MockExecutorConfig {
            default_latency_ns: 1000,
            default_outputs: vec![1.0, 2.0, 3.0, 4.0],
            rules: Vec::new(),
        }
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
struct Directives {
    compile_error: Option<String>,
    run_error: Option<String>,
    latency_ns: Option<u64>,
    latency_seq: Vec<u64>,
    outputs: Option<Vec<f64>>,
    scale: Option<f64>,
    no_latency: bool,
    malformed: bool,
}

fn list<T: std::str::FromStr>(v: &str) -> Vec<T> {
    v.split(',').filter_map(|x| x.trim().parse().ok()).collect()
}

impl Directives {
    fn apply(&mut self, text: &str) {
        for word in text.split_whitespace() {
            let (key, value) = match word.split_once('=') {
                Some((k, v)) => (k, Some(v)),
                None => (word, None),
            };
            match key {
                "compile_error" => self.compile_error = Some(value.unwrap_or("mock compile error").into()),
                "run_error" => self.run_error = Some(value.unwrap_or("mock run error").into()),
                "latency_ns" => self.latency_ns = value.and_then(|v| v.parse().ok()),
                "latency_seq" => self.latency_seq = value.map(list).unwrap_or_default(),
                "outputs" => self.outputs = value.map(list),
                "scale" => self.scale = value.and_then(|v| v.parse().ok()),
                "no_latency" => self.no_latency = true,
                "malformed" => self.malformed = true,
                _ => {}
            }
        }
    }

    fn parse(source: &str, rules: &[MockExecRule]) -> Self {
        let mut d = Directives::default();
        for rule in rules.iter().filter(|r| source.contains(&r.contains)) {
            d.apply(&rule.directives);
        }
        for line in source.lines() {
            if let Some((_, rest)) = line.split_once("@mock") {
                d.apply(rest);
            }
        }
        d
    }
}

#[derive(Debug, Default)]
pub struct MockExecutor {
    config: MockExecutorConfig,
    compiles: AtomicUsize,
    executions: AtomicUsize,
    flushes: AtomicUsize,
    parsed: Mutex<HashMap<String, Arc<Directives>>>,
}

impl MockExecutor {
    pub fn new(config: MockExecutorConfig) -> Self {
        MockExecutor {
            config,
            ..Default::default()
        }
    }

    fn directives(&self, binary: &Binary) -> Arc<Directives> {
        let mut parsed = self.parsed.lock().unwrap_or_else(|p| p.into_inner());
        let d = parsed
            .entry(binary.key.clone())
            .or_insert_with(|| Arc::new(Directives::parse(&binary.source, &self.config.rules)));
        Arc::clone(d)
    }
}

impl Executor for MockExecutor {
    fn compile(&self, source: &str, _task: &KernelTask) -> Result<Outcome<Binary>> {
        self.compiles.fetch_add(1, Ordering::Relaxed);
        let d = Directives::parse(source, &self.config.rules);
        if let Some(msg) = d.compile_error {
            return Ok(Err(msg));
        }
        Ok(Ok(Binary {
            key: util::sha256_hex(source),
            path: None,
            source: Arc::from(source),
        }))
    }

    fn run(&self, binary: &Binary, _task: &KernelTask, kind: RunKind) -> Result<Outcome<RunOutput>> {
        self.executions.fetch_add(1, Ordering::Relaxed);
        let d = self.directives(binary);
        if let Some(msg) = &d.run_error {
            return Ok(Err(msg.clone()));
        }
        if d.malformed {
            return Ok(Ok(RunOutput {
                stdout: "not a result\n".into(),
                wall_ns: 0,
            }));
        }
        let scale = d.scale.unwrap_or(1.0);
        let values: Vec<String> = d
            .outputs
            .as_deref()
            .unwrap_or(&self.config.default_outputs)
            .iter()
            .map(|v| format!("{}", v * scale))
            .collect();
        let latency = match (kind, d.latency_seq.is_empty()) {
            (RunKind::Measured(i), false) => d.latency_seq[i % d.latency_seq.len()],
            _ => d.latency_ns.unwrap_or(self.config.default_latency_ns),
        };
        let mut stdout = format!("{}\n{}\n", values.len(), values.join(" "));
        if !d.no_latency {
            stdout.push_str(&format!("LAT_NS {latency}\n"));
        }
        Ok(Ok(RunOutput {
            stdout,
            wall_ns: latency,
        }))
    }

    fn flush_caches(&self) -> Result<()> {
        self.flushes.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    fn settle(&self, _delay: Duration) {}

    fn stats(&self) -> ExecutorStats {
        ExecutorStats {
            compiles: self.compiles.load(Ordering::Relaxed),
            executions: self.executions.load(Ordering::Relaxed),
            flushes: self.flushes.load(Ordering::Relaxed),
        }
    }
}
