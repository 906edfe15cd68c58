//! C ABI for kevo-core.
//!
//! Every fallible function returns a [`KevoStatus`]. On failure the message is
//! kept per thread and read with [`kevo_last_error`]. Strings handed out by the
//! library are owned by the caller and released with [`kevo_string_free`];
//! handles are released with their matching `_free` function.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use kevo::eval::{check_correctness, EvalHarness, ExecutorConfig, KernelTask};
use kevo::llm::{extract_boxed_description, render_prompt, TemplateId};
use kevo::pool::{sample_idea, sample_thoughts, IdeaPool};
use kevo::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result code of every fallible call. `KEVO_STATUS_OK` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KevoStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Schema = 4,
    Parse = 5,
    State = 6,
    Invariant = 7,
    Environment = 8,
    Io = 9,
    Reference = 10,
    Extraction = 11,
    Template = 12,
    Transport = 13,
    Protocol = 14,
    Panic = 15,
    Other = 16,
}

/// Distribution of per-task best speedups.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KevoSpeedupSummary {
    pub mean: f64,
    pub max: f64,
    pub p75: f64,
    pub p50: f64,
    pub p25: f64,
    /// Tasks above the success threshold.
    pub success: usize,
    pub total: usize,
}

/// Opaque idea pool.
pub struct KevoPool {
    pool: IdeaPool,
}

/// Opaque evaluation harness.
pub struct KevoHarness {
    harness: EvalHarness,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(KevoStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse { .. } => KevoStatus::Parse,
            Error::Config(_) => KevoStatus::Config,
            Error::Schema(_) => KevoStatus::Schema,
            Error::State(_) => KevoStatus::State,
            Error::Invariant(_) => KevoStatus::Invariant,
            Error::Environment(_) => KevoStatus::Environment,
            Error::Io { .. } => KevoStatus::Io,
            Error::Reference(_) => KevoStatus::Reference,
            Error::Extraction(_) => KevoStatus::Extraction,
            Error::Template(_) => KevoStatus::Template,
            Error::Transport(_) => KevoStatus::Transport,
            Error::Protocol(_) => KevoStatus::Protocol,
            Error::Conflict(_) | Error::Arithmetic(_) => KevoStatus::Other,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).expect("interior NULs replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KevoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KevoStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let detail = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {detail}"));
            KevoStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(KevoStatus::NullArgument, format!("`{name}` is null"))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(KevoStatus::InvalidUtf8, format!("`{name}`: {e}")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    match (p.is_null(), len) {
        (_, 0) => Ok(&[]),
        (true, _) => Err(null(name)),
        (false, _) => Ok(std::slice::from_raw_parts(p, len)),
    }
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

fn owned(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(KevoStatus::InvalidUtf8, "result contains a NUL byte".into()))
}

fn to_json(value: &impl serde::Serialize) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(|e| Failure(KevoStatus::Other, e.to_string()))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kevo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn kevo_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kevo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Element-wise check `|c - r| / max(|r|, abs_floor) <= epsilon`.
///
/// # Safety
/// `candidate` and `reference` point to `len` doubles each (may be NULL when
/// `len` is 0); the out pointers are writable.
#[no_mangle]
pub unsafe extern "C" fn kevo_check_correctness(
    candidate: *const f64,
    reference: *const f64,
    len: usize,
    epsilon: f64,
    abs_floor: f64,
    out_correct: *mut bool,
    out_max_deviation: *mut f64,
) -> KevoStatus {
    guard(|| {
        let c = slice(candidate, len, "candidate")?;
        let r = slice(reference, len, "reference")?;
        let correct = out(out_correct, "out_correct")?;
        let dev = out(out_max_deviation, "out_max_deviation")?;
        if !(epsilon >= 0.0 && abs_floor > 0.0) {
            return Err(Failure(KevoStatus::Config, "epsilon must be >= 0 and abs_floor > 0".into()));
        }
        let (ok, max_dev) = check_correctness(c, r, epsilon, abs_floor)?;
        *correct = ok;
        *dev = max_dev;
        Ok(())
    })
}

/// Mean, max, quartiles and success count of `len` speedups.
///
/// # Safety
/// `speedups` points to `len` doubles; `out_summary` is writable.
#[no_mangle]
pub unsafe extern "C" fn kevo_summarize_speedups(
    speedups: *const f64,
    len: usize,
    out_summary: *mut KevoSpeedupSummary,
) -> KevoStatus {
    guard(|| {
        let values = slice(speedups, len, "speedups")?;
        let dst = out(out_summary, "out_summary")?;
        let s = kevo::report::summarize(values)
            .ok_or_else(|| Failure(KevoStatus::State, "no speedups to summarize".into()))?;
        *dst = KevoSpeedupSummary {
            mean: s.mean,
            max: s.max,
            p75: s.p75,
            p50: s.p50,
            p25: s.p25,
            success: s.success,
            total: s.total,
        };
        Ok(())
    })
}

/// Splits a model reply into its boxed description and its code.
///
/// # Safety
/// `reply` is a NUL-terminated UTF-8 string; the out pointers are writable.
/// On success both outputs must be released with `kevo_string_free`.
#[no_mangle]
pub unsafe extern "C" fn kevo_extract_boxed(
    reply: *const c_char,
    out_description: *mut *mut c_char,
    out_code: *mut *mut c_char,
) -> KevoStatus {
    guard(|| {
        let reply = text(reply, "reply")?;
        let d = out(out_description, "out_description")?;
        let c = out(out_code, "out_code")?;
        let (description, code) = extract_boxed_description(reply)?;
        let description = owned(description)?;
        *c = owned(code).inspect_err(|_| drop(CString::from_raw(description)))?;
        *d = description;
        Ok(())
    })
}

/// Renders `summarize_idea`, `seed_init` or `eoh_step` with bindings given as
/// a JSON object of strings.
///
/// # Safety
/// String arguments are NUL-terminated UTF-8; the out pointers are writable.
/// On success both outputs must be released with `kevo_string_free`.
#[no_mangle]
pub unsafe extern "C" fn kevo_render_prompt(
    template: *const c_char,
    bindings_json: *const c_char,
    out_system: *mut *mut c_char,
    out_user: *mut *mut c_char,
) -> KevoStatus {
    guard(|| {
        let id = TemplateId::parse(text(template, "template")?)?;
        let bindings: BTreeMap<String, String> = serde_json::from_str(text(bindings_json, "bindings_json")?)
            .map_err(|e| Failure(KevoStatus::Parse, format!("bindings: {e}")))?;
        let s = out(out_system, "out_system")?;
        let u = out(out_user, "out_user")?;
        let prompt = render_prompt(id, bindings)?;
        let system = owned(prompt.system)?;
        *u = owned(prompt.user).inspect_err(|_| drop(CString::from_raw(system)))?;
        *s = system;
        Ok(())
    })
}

fn pool_handle(pool: IdeaPool, out_pool: &mut *mut KevoPool) {
    *out_pool = Box::into_raw(Box::new(KevoPool { pool }));
}

/// Parses and validates a pool from JSON text.
///
/// # Safety
/// `json` is NUL-terminated UTF-8; `out_pool` is writable.
#[no_mangle]
pub unsafe extern "C" fn kevo_pool_from_json(json: *const c_char, out_pool: *mut *mut KevoPool) -> KevoStatus {
    guard(|| {
        let json = text(json, "json")?;
        let dst = out(out_pool, "out_pool")?;
        pool_handle(IdeaPool::from_json(json)?, dst);
        Ok(())
    })
}

/// Loads and validates a pool file.
///
/// # Safety
/// `path` is NUL-terminated UTF-8; `out_pool` is writable.
#[no_mangle]
pub unsafe extern "C" fn kevo_pool_load(path: *const c_char, out_pool: *mut *mut KevoPool) -> KevoStatus {
    guard(|| {
        let path = text(path, "path")?;
        let dst = out(out_pool, "out_pool")?;
        pool_handle(IdeaPool::load(Path::new(path))?, dst);
        Ok(())
    })
}

/// Writes the pool as JSON.
///
/// # Safety
/// `pool` is a live handle; `path` is NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn kevo_pool_save(pool: *const KevoPool, path: *const c_char) -> KevoStatus {
    guard(|| {
        let pool = pool.as_ref().ok_or_else(|| null("pool"))?;
        pool.pool.save(Path::new(text(path, "path")?))?;
        Ok(())
    })
}

/// Serializes the pool. Release the result with `kevo_string_free`.
///
/// # Safety
/// `pool` is a live handle; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn kevo_pool_to_json(pool: *const KevoPool, out_json: *mut *mut c_char) -> KevoStatus {
    guard(|| {
        let pool = pool.as_ref().ok_or_else(|| null("pool"))?;
        *out(out_json, "out_json")? = owned(pool.pool.to_json())?;
        Ok(())
    })
}

/// Number of ideas and of thoughts in the pool.
///
/// # Safety
/// `pool` is a live handle; the out pointers are writable.
#[no_mangle]
pub unsafe extern "C" fn kevo_pool_counts(
    pool: *const KevoPool,
    out_ideas: *mut usize,
    out_thoughts: *mut usize,
) -> KevoStatus {
    guard(|| {
        let pool = pool.as_ref().ok_or_else(|| null("pool"))?;
        *out(out_ideas, "out_ideas")? = pool.pool.ideas.len();
        *out(out_thoughts, "out_thoughts")? = pool.pool.thought_count();
        Ok(())
    })
}

/// Draws one idea uniformly, then `count` of its thoughts weighted by a
/// softmax of their efficiencies at `temperature`. The same seed gives the
/// same draw. The result is JSON:
/// `{"idea_id", "principle", "with_replacement", "thoughts": [..]}`.
///
/// # Safety
/// `pool` is a live handle; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn kevo_pool_sample(
    pool: *const KevoPool,
    seed: u64,
    count: usize,
    temperature: f64,
    out_json: *mut *mut c_char,
) -> KevoStatus {
    guard(|| {
        let pool = pool.as_ref().ok_or_else(|| null("pool"))?;
        let dst = out(out_json, "out_json")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idea = sample_idea(&pool.pool, &mut rng)?;
        let sample = sample_thoughts(idea, count, temperature, &mut rng)?;
        let value = serde_json::json!({
            "idea_id": idea.id,
            "principle": idea.principle,
            "with_replacement": sample.with_replacement,
            "thoughts": sample.thoughts,
        });
        *dst = owned(to_json(&value)?)?;
        Ok(())
    })
}

/// Blends an observed speedup delta into one thought's efficiency:
/// `phi <- (1 - alpha) * phi + alpha * delta`.
///
/// # Safety
/// `pool` is a live handle; `thought_id` is NUL-terminated UTF-8.
#[no_mangle]
pub unsafe extern "C" fn kevo_pool_update_efficiency(
    pool: *mut KevoPool,
    thought_id: *const c_char,
    delta: f64,
    alpha: f64,
) -> KevoStatus {
    guard(|| {
        let pool = pool.as_mut().ok_or_else(|| null("pool"))?;
        let id = text(thought_id, "thought_id")?;
        pool.pool.update_efficiencies(&[(id.to_string(), delta)], alpha)?;
        Ok(())
    })
}

/// Releases a pool handle. NULL is ignored.
///
/// # Safety
/// `pool` comes from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kevo_pool_free(pool: *mut KevoPool) {
    if !pool.is_null() {
        drop(Box::from_raw(pool));
    }
}

/// Creates a harness from an executor configuration in JSON. Missing keys
/// take their defaults; `{"kind": "mock"}` needs no toolchain.
///
/// # Safety
/// `config_json` is NUL-terminated UTF-8; `out_harness` is writable.
#[no_mangle]
pub unsafe extern "C" fn kevo_harness_new(
    config_json: *const c_char,
    out_harness: *mut *mut KevoHarness,
) -> KevoStatus {
    guard(|| {
        let config: ExecutorConfig = serde_json::from_str(text(config_json, "config_json")?)
            .map_err(|e| Failure(KevoStatus::Config, format!("executor config: {e}")))?;
        let dst = out(out_harness, "out_harness")?;
        let harness = EvalHarness::new(config)?;
        *dst = Box::into_raw(Box::new(KevoHarness { harness }));
        Ok(())
    })
}

/// Compiles, runs and times `source` against the task file at `task_path`
/// and writes the verdict as JSON. A kernel that fails to compile or produces
/// wrong values is a successful call with `"correct": false`.
///
/// # Safety
/// `harness` is a live handle; strings are NUL-terminated UTF-8; `out_json`
/// is writable.
#[no_mangle]
pub unsafe extern "C" fn kevo_harness_evaluate(
    harness: *const KevoHarness,
    task_path: *const c_char,
    source: *const c_char,
    out_json: *mut *mut c_char,
) -> KevoStatus {
    guard(|| {
        let h = harness.as_ref().ok_or_else(|| null("harness"))?;
        let task = KernelTask::load(Path::new(text(task_path, "task_path")?))?;
        let source = text(source, "source")?;
        let dst = out(out_json, "out_json")?;
        let result = h.harness.evaluate(source, &task)?;
        *dst = owned(to_json(&result)?)?;
        Ok(())
    })
}

/// Releases a harness handle. NULL is ignored.
///
/// # Safety
/// `harness` comes from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kevo_harness_free(harness: *mut KevoHarness) {
    if !harness.is_null() {
        drop(Box::from_raw(harness));
    }
}
