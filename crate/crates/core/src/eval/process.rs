//! Executor that shells out to a compiler and runs binaries locally, under an
//! emulator, or on a remote board through configurable argv templates.

use std::collections::HashSet;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

use super::{Binary, Executor, ExecutorConfig, ExecutorKind, ExecutorStats, KernelTask, Outcome, RunKind, RunOutput};
use crate::error::{Error, Result};
use crate::util;

const KERNEL_FILE: &str = "kernel.c";
const HARNESS_FILE: &str = "harness.c";
const BINARY_FILE: &str = "kernel.bin";

pub struct ProcessExecutor {
    config: ExecutorConfig,
    work_dir: PathBuf,
    _temp: Option<tempfile::TempDir>,
    deployed: Mutex<HashSet<String>>,
    compiles: AtomicUsize,
    executions: AtomicUsize,
    flushes: AtomicUsize,
}

struct Finished {
    status: Option<i32>,
    stdout: String,
    stderr: String,
    elapsed: Duration,
}

fn spawn_and_wait(argv: &[String], timeout: Duration, env: &[(&str, String)]) -> Result<Option<Finished>> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| Error::Config("empty command template".into()))?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    for (k, v) in env {
        cmd.env(k, v);
    }
    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|e| {
        Error::Environment(format!("cannot start `{program}`: {e}"))
    })?;
    let mut out_pipe = child.stdout.take().expect("piped stdout");
    let mut err_pipe = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = out_pipe.read_to_end(&mut buf);
        buf
    });
    let err_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = err_pipe.read_to_end(&mut buf);
        buf
    });
    let status = child
        .wait_timeout(timeout)
        .map_err(|e| Error::Environment(format!("waiting for `{program}`: {e}")))?;
    let elapsed = start.elapsed();
    let status = match status {
        Some(s) => s,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(None);
        }
    };
    let stdout = String::from_utf8_lossy(&out_reader.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&err_reader.join().unwrap_or_default()).into_owned();
    Ok(Some(Finished {
        status: status.code(),
        stdout,
        stderr,
        elapsed,
    }))
}

fn tail(text: &str, max: usize) -> &str {
    let t = text.trim_end();
    if t.len() <= max {
        return t;
    }
    let mut start = t.len() - max;
    while !t.is_char_boundary(start) {
        start += 1;
    }
    &t[start..]
}

impl ProcessExecutor {
    pub fn new(config: ExecutorConfig) -> Result<Self> {
        let (work_dir, temp) = match &config.work_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                (dir.clone(), None)
            }
            None => {
                let t = tempfile::Builder::new()
                    .prefix("kevo-build-")
                    .tempdir()
                    .map_err(|e| Error::Environment(format!("creating build directory: {e}")))?;
                (t.path().to_path_buf(), Some(t))
            }
        };
        Ok(ProcessExecutor {
            config,
            work_dir,
            _temp: temp,
            deployed: Mutex::new(HashSet::new()),
            compiles: AtomicUsize::new(0),
            executions: AtomicUsize::new(0),
            flushes: AtomicUsize::new(0),
        })
    }

    fn run_template(&self) -> Vec<String> {
        self.config.run_argv.clone().unwrap_or_else(|| match self.config.kind {
            ExecutorKind::Emulator => vec!["qemu-riscv64".into(), "{bin}".into()],
            _ => vec!["{bin}".into()],
        })
    }

    fn expand(&self, template: &[String], dir: &Path, key: &str) -> Vec<String> {
        let path = |f: &str| dir.join(f).to_string_lossy().into_owned();
        let mut out = Vec::new();
        for arg in template {
            if arg == "{flags}" {
                out.extend(self.config.flags.iter().cloned());
                continue;
            }
            out.push(
                arg.replace("{compiler}", &self.config.compiler)
                    .replace("{out}", &path(BINARY_FILE))
                    .replace("{bin}", &path(BINARY_FILE))
                    .replace("{harness}", &path(HARNESS_FILE))
                    .replace("{kernel}", &path(KERNEL_FILE))
                    .replace("{dir}", &dir.to_string_lossy())
                    .replace("{key}", key),
            );
        }
        out
    }

    fn env(task: &KernelTask) -> Vec<(&'static str, String)> {
        vec![
            ("KEVO_TASK", task.task_id.clone()),
            ("KEVO_INPUT_SPEC", task.input_spec.to_string()),
        ]
    }

    fn timeout(secs: f64) -> Duration {
        Duration::from_secs_f64(secs.max(0.001))
    }
}

impl Executor for ProcessExecutor {
    fn compile(&self, source: &str, task: &KernelTask) -> Result<Outcome<Binary>> {
        self.compiles.fetch_add(1, Ordering::Relaxed);
        let key = util::sha256_hex(format!("{}\0{}", util::sha256_hex(&task.harness_source), util::sha256_hex(source)));
        let dir = self.work_dir.join(&key[..24]);
        util::write_string(&dir.join(KERNEL_FILE), source)?;
        util::write_string(&dir.join(HARNESS_FILE), &task.harness_source)?;
        let argv = self.expand(&self.config.compile_argv, &dir, &key);
        tracing::debug!(?argv, "compiling");
        let finished = spawn_and_wait(&argv, Self::timeout(self.config.compile_timeout_s), &[])?;
        Ok(match finished {
            None => Err(format!("compiler timed out after {}s", self.config.compile_timeout_s)),
            Some(f) if f.status == Some(0) => Ok(Binary {
                key,
                path: Some(dir.join(BINARY_FILE)),
                source: Arc::from(source),
            }),
            Some(f) => Err(format!(
                "compiler exited with {:?}: {}",
                f.status,
                tail(&f.stderr, 4000)
            )),
        })
    }

    fn run(&self, binary: &Binary, task: &KernelTask, _kind: RunKind) -> Result<Outcome<RunOutput>> {
        let dir = binary
            .path
            .as_deref()
            .and_then(Path::parent)
            .ok_or_else(|| Error::State("binary has no build directory".into()))?
            .to_path_buf();
        let env = Self::env(task);
        if let Some(deploy) = &self.config.deploy_argv {
            let fresh = self.deployed.lock().expect("deploy set poisoned").insert(binary.key.clone());
            if fresh {
                let argv = self.expand(deploy, &dir, &binary.key);
                match spawn_and_wait(&argv, Self::timeout(self.config.run_timeout_s), &env)? {
                    Some(f) if f.status == Some(0) => {}
                    Some(f) => {
                        return Err(Error::Environment(format!(
                            "deploy failed ({:?}): {}",
                            f.status,
                            tail(&f.stderr, 2000)
                        )))
                    }
                    None => return Err(Error::Environment("deploy timed out".into())),
                }
            }
        }
        self.executions.fetch_add(1, Ordering::Relaxed);
        let argv = self.expand(&self.run_template(), &dir, &binary.key);
        Ok(match spawn_and_wait(&argv, Self::timeout(self.config.run_timeout_s), &env)? {
            None => Err(format!("run timed out after {}s", self.config.run_timeout_s)),
            Some(f) if f.status == Some(0) => Ok(RunOutput {
                stdout: f.stdout,
                wall_ns: f.elapsed.as_nanos() as u64,
            }),
            Some(f) => Err(format!("exited with {:?}: {}", f.status, tail(&f.stderr, 2000))),
        })
    }

    fn flush_caches(&self) -> Result<()> {
        self.flushes.fetch_add(1, Ordering::Relaxed);
        if let Some(argv) = &self.config.flush_argv {
            return match spawn_and_wait(argv, Self::timeout(self.config.run_timeout_s), &[])? {
                Some(f) if f.status == Some(0) => Ok(()),
                _ => Err(Error::Environment("cache flush command failed".into())),
            };
        }
        let mut buf = vec![0u8; self.config.flush_buffer_bytes];
        for (i, b) in buf.iter_mut().enumerate().step_by(64) {
            *b = i as u8;
        }
        let sum: u64 = buf.iter().step_by(64).map(|&b| u64::from(b)).sum();
        std::hint::black_box(sum);
        Ok(())
    }

    fn stats(&self) -> ExecutorStats {
        ExecutorStats {
            compiles: self.compiles.load(Ordering::Relaxed),
            executions: self.executions.load(Ordering::Relaxed),
            flushes: self.flushes.load(Ordering::Relaxed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{EvalHarness, Stage, TaskCategory};

    const HARNESS: &str = r#"#include <stdio.h>
#include <time.h>
void kernel(float *x, int n);
int main(void) {
    float x[4] = {1, 2, 3, 4};
    struct timespec a, b;
    clock_gettime(CLOCK_MONOTONIC, &a);
    kernel(x, 4);
    clock_gettime(CLOCK_MONOTONIC, &b);
    printf("4\n");
    for (int i = 0; i < 4; i++) printf("%.9g ", x[i]);
    printf("\nLAT_NS %lld\n", (long long)((b.tv_sec - a.tv_sec) * 1000000000LL + (b.tv_nsec - a.tv_nsec)) + 1);
    return 0;
}
"#;

    fn have_cc() -> bool {
        Command::new("cc").arg("--version").output().is_ok()
    }

    fn config() -> ExecutorConfig {
        ExecutorConfig {
            compiler: "cc".into(),
            flags: vec!["-O2".into()],
            settle_ms: 0,
            warm_runs: 1,
            measured_runs: 3,
            flush_buffer_bytes: 1 << 16,
            ..ExecutorConfig::default()
        }
    }

    fn task() -> KernelTask {
        KernelTask {
            task_id: "double".into(),
            operation: "double".into(),
            category: TaskCategory::General,
            reference_source: "void kernel(float *x, int n) { for (int i = 0; i < n; i++) x[i] *= 2; }\n".into(),
            harness_source: HARNESS.into(),
            input_spec: serde_json::Value::Null,
        }
    }

    #[test]
    fn local_toolchain_round_trip() {
        if !have_cc() {
            eprintln!("SKIP: no C compiler");
            return;
        }
        let h = EvalHarness::new(config()).unwrap();
        let t = task();
        let same = h.evaluate(&t.reference_source, &t).unwrap();
        assert!(same.correct, "{same:?}");
        assert_eq!(same.max_rel_dev, Some(0.0));

        let wrong = h
            .evaluate("void kernel(float *x, int n) { for (int i = 0; i < n; i++) x[i] *= 3; }\n", &t)
            .unwrap();
        assert_eq!(wrong.failure.unwrap().stage, Stage::Compare);

        let broken = h.evaluate("void kernel(float *x, int n) { syntax error }\n", &t).unwrap();
        let f = broken.failure.unwrap();
        assert_eq!(f.stage, Stage::Compile);
        assert!(f.detail.contains("exited"), "{}", f.detail);

        let crash = h
            .evaluate("#include <stdlib.h>\nvoid kernel(float *x, int n) { abort(); }\n", &t)
            .unwrap();
        assert_eq!(crash.failure.unwrap().stage, Stage::Run);
    }

    #[test]
    fn missing_toolchain_is_environment_error() {
        let cfg = ExecutorConfig {
            compiler: "/nonexistent/kevo-cc".into(),
            ..config()
        };
        let h = EvalHarness::new(cfg).unwrap();
        let err = h.evaluate("x", &task()).unwrap_err();
        assert!(matches!(err, Error::Environment(_)), "{err}");
    }

    #[test]
    fn hung_binary_times_out() {
        if !have_cc() {
            return;
        }
        let cfg = ExecutorConfig {
            run_timeout_s: 0.5,
            ..config()
        };
        let h = EvalHarness::new(cfg).unwrap();
        let t = task();
        h.baseline(&t).unwrap();
        let r = h
            .evaluate("#include <unistd.h>\nvoid kernel(float *x, int n) { sleep(30); }\n", &t)
            .unwrap();
        assert!(r.failure.unwrap().detail.contains("timed out"));
    }
}
