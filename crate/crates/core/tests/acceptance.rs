//! Exit-gate checks. Each check prints one `PASS`/`FAIL` line with its
//! runtime and fails if the check or its time limit does not hold.
//!
//! Runs without the libtest harness so the verdict lines always reach the
//! console. Positional arguments filter checks by name substring.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, LazyLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use kevo::eoh::{run_search, SearchConfig, SearchDeps, Target};
use kevo::eval::{EvalHarness, ExecutorConfig, ExecutorKind, KernelTask, TaskCategory};
use kevo::kernel::{KernelCandidate, Origin};
use kevo::llm::{
    render_prompt, ChatRequest, Clock, Gateway, HashEmbedder, KernelImprover, MockChat, RetryPolicy, TemplateId,
};
use kevo::miner::{estimate_effectiveness, Commit, CommitFlags, PerfDirection, PpeRecord, RawCommit};
use kevo::orchestrator::{EohRunner, Orchestrator, RunConfig};
use kevo::pool::{
    build_pool, refine_pairing, sample_idea, sample_thoughts, Idea, IdeaPool, PoolBuildConfig, PoolMode,
    Provenance, Thought,
};
use kevo::rag::{retrieve, Chunk, RetrievalIndex};
use kevo::report;

fn check(id: u32, name: &str, limit: Duration, body: impl FnOnce() -> Result<(), String>) {
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed();
    let verdict = match (&outcome, elapsed <= limit) {
        (Ok(()), true) => "PASS".to_string(),
        (Ok(()), false) => format!("FAIL (over time limit {limit:?})"),
        (Err(e), _) => format!("FAIL ({e})"),
    };
    println!("acceptance {id} {name}: {verdict} in {:.3}s", elapsed.as_secs_f64());
    assert!(verdict == "PASS", "acceptance {id} {name}: {verdict}");
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gateway(chat: MockChat, dim: usize) -> Gateway {
    Gateway::new(Arc::new(chat), Arc::new(HashEmbedder::new(dim).unwrap()), RetryPolicy::none(), Clock::Logical)
}

fn commit(id: &str, ts: i64, msg: &str, gw: &Gateway) -> Commit {
    Commit {
        raw: RawCommit {
            id: id.into(),
            timestamp: ts,
            message: msg.into(),
            diff: format!("+ change from {id}\n"),
        },
        embedding: gw.embed_one(msg).unwrap(),
        effectiveness: 0.0,
        flags: CommitFlags::default(),
    }
}

/// Summaries echo the first commit message or thought of the prompt.
fn echo_summarizer() -> MockChat {
    MockChat::new()
        .rule("Commit message: ([^\\n]+)", ["$1"])
        .unwrap()
        .rule("Thought: ([^\\n]+)", ["$1"])
        .unwrap()
}

fn acceptance_1_effectiveness_conservation() {
    check(1, "effectiveness conservation", Duration::from_secs(1), || {
        let gw = gateway(echo_summarizer(), 128);
        let themes = [
            "Unroll the dgemm inner loop",
            "Vectorize the sgemv row loop",
            "Prefetch packed panels early",
            "Fuse alpha scaling into packing",
            "Reorder loads to hide latency",
            "Tile the trsm triangle solve",
            "Use wider vector register groups",
            "Hoist loop invariant address math",
            "Interleave accumulators for the dot kernel",
            "Replace strided loads with packing",
        ];
        // Snapshots at 1000, 2000, 3000, 4000, 5000: four windows. Commits
        // run from 500 to 5400 so a few fall outside every window.
        let ppes: Vec<PpeRecord> = [1.0, 1.07, 1.2, 1.18, 1.31]
            .iter()
            .enumerate()
            .map(|(i, p)| PpeRecord { timestamp: 1000 * (i as i64 + 1), relative_performance: *p })
            .collect();
        let commits: Vec<Commit> = (0..50)
            .map(|i| commit(&format!("c{i:02}"), 500 + 100 * i as i64, themes[i % themes.len()], &gw))
            .collect();
        let commits = estimate_effectiveness(commits, &ppes, PerfDirection::HigherIsBetter, None)
            .map_err(|e| e.to_string())?;

        // Oracle: each window with at least one commit contributes its whole
        // relative improvement exactly once.
        let mut expected = 0.0;
        for w in ppes.windows(2) {
            let populated = commits.iter().any(|c| c.raw.timestamp >= w[0].timestamp && c.raw.timestamp < w[1].timestamp);
            if populated {
                expected += (w[1].relative_performance - w[0].relative_performance) / w[0].relative_performance;
            }
        }
        let commit_sum: f64 = commits.iter().filter(|c| !c.flags.unwindowed).map(|c| c.effectiveness).sum();
        ensure((commit_sum - expected).abs() <= 1e-9 * expected.abs(), || {
            format!("commit sum {commit_sum} != window sum {expected}")
        })?;

        let config = PoolBuildConfig { max_rounds: 20, idea_count: 4, ..PoolBuildConfig::default() };
        let pool = build_pool(&commits, &gw, &config).map_err(|e| e.to_string())?;
        ensure(pool.provenance.converged, || "pool abstraction did not converge".into())?;
        let thought_sum: f64 = pool.thoughts().map(|t| t.efficiency).sum();
        let members: usize = pool.thoughts().map(|t| t.member_commit_ids.len()).sum();
        ensure(members == 50, || format!("{members} of 50 commits belong to a thought"))?;
        ensure((thought_sum - commit_sum).abs() <= 1e-9 * commit_sum.abs(), || {
            format!("thought sum {thought_sum} != commit sum {commit_sum}")
        })
    });
}

fn acceptance_2_abstraction_fixed_point() {
    check(2, "abstraction loop fixed point", Duration::from_secs(5), || {
        let chat = MockChat::new()
            .rule("dgemm", ["Unroll the dgemm inner loop"])
            .unwrap()
            .rule("sgemv", ["Use vector fma in sgemv kernel"])
            .unwrap();
        let gw = gateway(chat, 256);
        // Two groups of four messages; each group is one bag of words.
        let msgs = [
            "unroll the dgemm inner loop",
            "the inner dgemm loop unroll",
            "Loop Unroll The Inner DGEMM",
            "dgemm: unroll inner loop the",
            "use vector fma in sgemv kernel",
            "sgemv kernel: use fma in vector",
            "In sgemv Kernel use Vector FMA",
            "vector fma use in kernel sgemv",
        ];
        let commits: Vec<Commit> =
            msgs.iter().enumerate().map(|(i, m)| commit(&format!("c{i}"), i as i64, m, &gw)).collect();
        let seed = |id: &str, d: &str| Thought {
            id: id.into(),
            description: d.into(),
            code_examples: String::new(),
            efficiency: 0.0,
            member_commit_ids: vec![],
            embedding: vec![],
            category: None,
            unvalidated: false,
        };
        let seeds = vec![seed("seed-00", "Unroll the dgemm inner loop"), seed("seed-01", "Branch predication")];
        // Hand simulation: round 1 pairs c0..c3 with seed-00 and leaves
        // c4..c7 unassigned; they form one cluster summarized as the sgemv
        // thought. Round 2 assigns everything under a new partition, round 3
        // repeats it and stops.
        let out = refine_pairing(&commits, seeds, &gw, &PoolBuildConfig::default()).map_err(|e| e.to_string())?;
        let group = |ids: &[&str]| ids.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let expected = vec![group(&["c0", "c1", "c2", "c3"]), group(&["c4", "c5", "c6", "c7"])];
        ensure(out.converged && out.rounds <= 3, || format!("converged={} after {} rounds", out.converged, out.rounds))?;
        ensure(out.assignment.unassigned.is_empty(), || format!("unassigned: {:?}", out.assignment.unassigned))?;
        ensure(out.assignment.partition() == expected, || format!("partition {:?}", out.assignment.partition()))
    });
}

fn thought_with_phi(id: &str, phi: f64) -> Thought {
    Thought {
        id: id.into(),
        description: format!("Apply {id}"),
        code_examples: String::new(),
        efficiency: phi,
        member_commit_ids: vec![format!("commit-{id}")],
        embedding: vec![1.0],
        category: None,
        unvalidated: false,
    }
}

fn acceptance_3_softmax_sampling_calibration() {
    check(3, "softmax sampling calibration", Duration::from_secs(5), || {
        let idea = Idea {
            id: "idea-00".into(),
            principle: "Apply things".into(),
            thoughts: vec![
                thought_with_phi("a", 1f64.ln()),
                thought_with_phi("b", 2f64.ln()),
                thought_with_phi("c", 3f64.ln()),
            ],
            unvalidated: false,
        };
        let draws = 60_000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for _ in 0..draws {
            let s = sample_thoughts(&idea, 1, 1.0, &mut rng).map_err(|e| e.to_string())?;
            *counts.entry(s.thoughts[0].id.clone()).or_default() += 1;
        }
        for (id, p) in [("a", 1.0 / 6.0), ("b", 2.0 / 6.0), ("c", 3.0 / 6.0)] {
            let f = counts.get(id).copied().unwrap_or(0) as f64 / draws as f64;
            ensure((f - p).abs() <= 0.01, || format!("thought {id}: frequency {f} vs {p}"))?;
        }

        let ideas: Vec<Idea> = (0..4)
            .map(|i| Idea {
                id: format!("idea-{i:02}"),
                principle: "Apply things".into(),
                thoughts: vec![thought_with_phi(&format!("t{i}"), i as f64)],
                unvalidated: false,
            })
            .collect();
        let pool = IdeaPool::new(1, Provenance::default(), ideas).map_err(|e| e.to_string())?;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            let idea = sample_idea(&pool, &mut rng).map_err(|e| e.to_string())?;
            counts[idea.id[5..].parse::<usize>().unwrap()] += 1;
        }
        for (i, c) in counts.iter().enumerate() {
            let f = *c as f64 / draws as f64;
            ensure((f - 0.25).abs() <= 0.01, || format!("idea {i}: frequency {f}"))?;
        }
        Ok(())
    });
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn acceptance_4_retrieval_oracle_equivalence() {
    check(4, "retrieval oracle equivalence", Duration::from_secs(10), || {
        let dim = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut index = RetrievalIndex::empty(dim, "test".into(), 100, 10);
        let mut pool_vectors: Vec<Vec<f64>> = Vec::new();
        for i in 0..1000 {
            // Every fifth chunk repeats an earlier vector to force score ties.
            let embedding = if i % 5 == 4 {
                pool_vectors[rng.random_range(0..pool_vectors.len())].clone()
            } else {
                unit((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            };
            pool_vectors.push(embedding.clone());
            index.chunks.push(Chunk {
                doc_id: format!("doc-{:02}", rng.random_range(0..40)),
                ordinal: rng.random_range(0..30),
                start: 0,
                text: format!("chunk {i}"),
                embedding,
            });
        }
        for q in 0..100 {
            let query = if q % 4 == 0 {
                pool_vectors[rng.random_range(0..pool_vectors.len())].clone()
            } else {
                unit((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            };
            let k = 1 + q % 12;
            let got: Vec<usize> = retrieve(&index, &query, k)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|h| index.chunks.iter().position(|c| std::ptr::eq(c, h.chunk)).unwrap())
                .collect();

            // Oracle: score every chunk, full sort, take the head.
            let mut scored: Vec<(f64, &str, usize, usize)> = index
                .chunks
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let s: f64 = query.iter().zip(&c.embedding).map(|(a, b)| a * b).sum();
                    (s, c.doc_id.as_str(), c.ordinal, i)
                })
                .collect();
            scored.sort_by(|a, b| {
                b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(b.1)).then_with(|| a.2.cmp(&b.2))
            });
            let want: Vec<(&str, usize)> = scored[..k].iter().map(|s| (s.1, s.2)).collect();
            let got_keys: Vec<(&str, usize)> =
                got.iter().map(|&i| (index.chunks[i].doc_id.as_str(), index.chunks[i].ordinal)).collect();
            ensure(got_keys == want, || format!("query {q}: {got_keys:?} vs oracle {want:?}"))?;
        }
        Ok(())
    });
}

const TOY_REF: &str = "void kernel(void) {}\n// @mock latency_ns=1000\n";

fn toy_task(id: &str, reference: &str) -> KernelTask {
    KernelTask {
        task_id: id.into(),
        operation: "Toy".into(),
        category: TaskCategory::General,
        reference_source: reference.into(),
        harness_source: "driver".into(),
        input_spec: serde_json::Value::Null,
    }
}

fn toy_idea(n: usize) -> Idea {
    Idea {
        id: "idea-00".into(),
        principle: "Exploit vector units".into(),
        thoughts: (0..n)
            .map(|i| Thought {
                code_examples: format!("+ vfmacc.vv v{i}, v1, v2\n"),
                ..thought_with_phi(&format!("t{i}"), 0.1 * i as f64)
            })
            .collect(),
        unvalidated: false,
    }
}

fn acceptance_5_eoh_budget_and_monotonicity() {
    check(5, "search budget and monotonicity", Duration::from_secs(10), || {
        let imp = KernelImprover { step_ns: 10, floor_ns: 100, default_ns: 1000 };
        let gw = gateway(MockChat::new().with_responder(move |r| imp.reply(r)), 64);
        let harness = EvalHarness::new(ExecutorConfig::mock()).map_err(|e| e.to_string())?;
        let task = toy_task("toy", TOY_REF);
        let eval = harness.evaluate_reference(&task).map_err(|e| e.to_string())?;
        let reference = KernelCandidate::new("ref", "reference", TOY_REF, eval, Origin::default());
        let target = Target::default();
        let deps = SearchDeps { gateway: &gw, harness: &harness, task: &task, target: &target, docs: None };
        let config = SearchConfig::default();
        ensure(config.population_size == 5 && config.generations == 5, || "defaults changed".into())?;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = run_search(&reference, &toy_idea(8), &config, deps, &mut rng).map_err(|e| e.to_string())?;

        let entries = gw.replay_entries();
        let generation_calls = entries
            .iter()
            .filter(|e| !e.request.reprompt && (e.request.tag == "seed_init" || e.request.tag.starts_with("eoh:")))
            .count();
        let seeds = entries.iter().filter(|e| e.request.tag == "seed_init" && !e.request.reprompt).count();
        ensure(generation_calls == 5 + 125 && seeds == 5, || {
            format!("{generation_calls} generation calls ({seeds} seeds)")
        })?;
        ensure(out.generations.len() == 5, || "five generations".into())?;
        let best: Vec<f64> = out.generations.iter().map(|g| g.best_ever).collect();
        ensure(best.windows(2).all(|w| w[1] >= w[0]), || format!("best-ever series {best:?}"))?;
        ensure(out.generations.iter().all(|g| g.population_size == 5), || "population size drifted".into())
    });
}

/// Deterministic scripted model for the end-to-end run: steps the parent's
/// latency down by 100 ns to a per-task floor carried in the source, and
/// spoils a fixed share of replies (compile error, wrong values, empty code).
fn scripted_model(request: &ChatRequest) -> Option<String> {
    static LATENCY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"latency_ns=(\d+)").unwrap());
    static FLOOR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"floor_ns=(\d+)").unwrap());
    let region = if request.tag == "seed_init" {
        request.system.as_str()
    } else if request.tag.starts_with("eoh:") {
        request.user.split(kevo::rag::CONTEXT_HEADER).next().unwrap_or_default()
    } else {
        return None;
    };
    // Incorrect kernels can be parents too; those without a timing start
    // from the reference. The floor rides along in every kernel source.
    let parent: u64 = LATENCY.captures(region).map_or(1200, |c| c[1].parse().unwrap());
    let all = format!("{}\n{}", request.system, request.user);
    let floor: u64 = FLOOR.captures(&all)?[1].parse().ok()?;
    let next = parent.saturating_sub(100).max(floor);
    let hash = kevo::util::fnv1a64(format!("{}\n{}\n{}", request.system, request.user, request.reprompt).as_bytes());
    Some(match hash % 11 {
        0 => format!("boxed {{Broken}}\n```c\nvoid kernel(void) {{}}\n// @mock compile_error floor_ns={floor}\n```\n"),
        1 => format!("boxed {{Wrong}}\n```c\nvoid kernel(void) {{}}\n// @mock outputs=9,9,9,9 latency_ns={next} floor_ns={floor}\n```\n"),
        2 => "boxed {Nothing to add}\n```c\n```\n".to_string(),
        _ => format!(
            "boxed {{Trim to {next} ns}}\n```c\nvoid kernel(void) {{}}\n// @mock latency_ns={next} floor_ns={floor}\n```\n"
        ),
    })
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn acceptance_6_end_to_end_mock_run() {
    check(6, "end-to-end mock run", Duration::from_secs(120), || {
        // Reference 1200 ns everywhere; the floor fixes each task's final
        // speedup at 1200 / floor.
        let floors = [1200u64, 1200, 1150, 1100, 1000, 960, 900, 800, 800, 750, 700, 640, 600, 600];
        let tasks: Vec<KernelTask> = floors
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let mut t = toy_task(
                    &format!("task-{i:02}"),
                    &format!("void kernel(void) {{}}\n// @mock latency_ns=1200 floor_ns={f}\n"),
                );
                t.category = if i % 2 == 0 { TaskCategory::General } else { TaskCategory::NnGroup1 };
                t
            })
            .collect();
        let pool = IdeaPool::new(1, Provenance::default(), vec![toy_idea(6)]).map_err(|e| e.to_string())?;
        let run = RunConfig { seed: 7, ..RunConfig::default() };
        ensure((run.searches, run.top_k, run.iterations) == (3, 3, 5), || "defaults changed".into())?;
        let search = SearchConfig::default();
        let target = Target::default();
        let root = tempfile::tempdir().map_err(|e| e.to_string())?;

        let mut trees = Vec::new();
        for attempt in 0..2 {
            let gw = gateway(MockChat::new().with_responder(scripted_model), 64);
            let harness = EvalHarness::new(ExecutorConfig::mock()).map_err(|e| e.to_string())?;
            let orch = Orchestrator {
                run: &run,
                search: &search,
                target: &target,
                gateway: &gw,
                harness: &harness,
                docs: None,
                runner: &EohRunner,
            };
            let dir = root.path().join(format!("run-{attempt}"));
            let result = orch.run_all(tasks.clone(), &pool, &dir).map_err(|e| e.to_string())?;
            ensure(result.completed && result.tasks.len() == 14, || "run incomplete".into())?;
            for t in &result.tasks {
                let db: kevo::kernel::KernelDatabase =
                    kevo::util::read_json(&dir.join("tasks").join(&t.task_id).join("database.json"))
                        .map_err(|e| e.to_string())?;
                ensure(db.len() <= 16, || format!("{}: database holds {}", t.task_id, db.len()))?;
                let series: Vec<f64> = t.series.iter().map(|s| s.best_so_far).collect();
                ensure(series.len() == 6 && series.windows(2).all(|w| w[1] >= w[0]), || {
                    format!("{}: best-so-far series {series:?}", t.task_id)
                })?;
            }
            let speedups: Vec<f64> = result.tasks.iter().map(|t| t.best_speedup).collect();
            let expected: Vec<f64> = floors.iter().map(|f| 1200.0 / *f as f64).collect();
            ensure(speedups == expected, || format!("final speedups {speedups:?}"))?;
            trees.push(tree(&dir));
        }
        // The run directories differ only in their own name, which is not
        // stored inside them.
        ensure(trees[0] == trees[1], || "seed-7 runs differ".into())?;

        let out = root.path().join("report");
        let rep = report::write_report(&[root.path().join("run-0")], &out).map_err(|e| e.to_string())?;
        let csv = std::fs::read_to_string(out.join("report.csv")).map_err(|e| e.to_string())?;
        let all: Vec<f64> = csv.lines().nth(1).unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        // Sorted speedups: 1, 1, 24/23, 12/11, 6/5, 5/4, 4/3, 3/2, 3/2, 8/5,
        // 12/7, 15/8, 2, 2. Quantile positions 3.25, 6.5, 9.75.
        let want = [
            4273141.0 / 2975280.0,     // mean
            2.0,                       // max
            8.0 / 5.0 + 0.75 * (12.0 / 7.0 - 8.0 / 5.0), // p75 = 59/35
            (4.0 / 3.0 + 1.5) / 2.0,   // p50 = 17/12
            12.0 / 11.0 + 0.25 * (6.0 / 5.0 - 12.0 / 11.0), // p25 = 123/110
            12.0,                      // success
            14.0,                      // total
        ];
        ensure(all.len() == want.len(), || format!("row {all:?}"))?;
        for (got, w) in all.iter().zip(want) {
            ensure((got - w).abs() < 1e-12, || format!("report row {all:?} vs {want:?}"))?;
        }
        ensure(rep.groups.len() == 3, || "per-category rows".into())
    });
}

/// Independent verdict: every element within `eps` relative deviation, NaN
/// only matching NaN and infinities only matching themselves.
fn oracle_ok(candidate: &[f64], reference: &[f64], eps: f64, floor: f64) -> bool {
    candidate.len() == reference.len()
        && candidate.iter().zip(reference).all(|(&c, &r)| {
            if r.is_nan() || c.is_nan() {
                r.is_nan() && c.is_nan()
            } else if r.is_infinite() || c.is_infinite() {
                r == c
            } else {
                let scale = if r.abs() > floor { r.abs() } else { floor };
                (c - r).abs() <= eps * scale
            }
        })
}

fn fmt_values(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn acceptance_7_evaluation_gating() {
    check(7, "evaluation gating", Duration::from_secs(5), || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut base = ExecutorConfig::mock();
        base.warm_runs = 1;
        base.measured_runs = 5;
        let (eps, floor) = (base.epsilon, base.abs_floor);
        let mut agreed_pass = 0;
        for case in 0..200 {
            let n = rng.random_range(1..8);
            let reference: Vec<f64> = (0..n)
                .map(|_| match rng.random_range(0..10) {
                    0 => 0.0,
                    1 => rng.random_range(-1e-7..1e-7),
                    2 => f64::INFINITY,
                    3 => f64::NAN,
                    _ => rng.random_range(-100.0..100.0),
                })
                .collect();
            let candidate: Vec<f64> = reference
                .iter()
                .map(|&r| {
                    let scale = if r.abs() > floor { r.abs() } else { floor };
                    match rng.random_range(0..8) {
                        0 => r,
                        1 | 2 => r + eps * scale * rng.random_range(-0.8..0.8),
                        3 | 4 => r + eps * scale * rng.random_range(1.2..5.0) * if rng.random() { 1.0 } else { -1.0 },
                        5 => f64::NAN,
                        6 => f64::NEG_INFINITY,
                        _ if r.is_finite() => r,
                        _ => 1.0,
                    }
                })
                .collect();
            let mut config = base.clone();
            config.mock.default_outputs = reference.clone();
            let harness = EvalHarness::new(config).map_err(|e| e.to_string())?;
            let task = toy_task(&format!("gate-{case}"), TOY_REF);
            let source = format!("void kernel(void) {{}}\n// @mock latency_ns=500 outputs={}\n", fmt_values(&candidate));
            let result = harness.evaluate(&source, &task).map_err(|e| e.to_string())?;
            let want = oracle_ok(&candidate, &reference, eps, floor);
            ensure(result.correct == want, || {
                format!("case {case}: harness {} vs oracle {want} for {candidate:?} / {reference:?}", result.correct)
            })?;
            ensure(result.correct == result.speedup.is_some(), || format!("case {case}: speedup gating broken"))?;
            if want {
                agreed_pass += 1;
            }
            if case % 20 == 0 {
                let identity = harness.evaluate(TOY_REF, &task).map_err(|e| e.to_string())?;
                ensure(identity.speedup == Some(1.0), || format!("identity speedup {:?}", identity.speedup))?;
            }
        }
        ensure(agreed_pass > 20 && agreed_pass < 180, || format!("unbalanced cases: {agreed_pass} pass"))
    });
}

fn render_for_golden(id: TemplateId, bindings: &[(&str, &str)]) -> String {
    let p = render_prompt(id, bindings.iter().copied()).unwrap();
    format!("=== system ===\n{}\n=== user ===\n{}\n", p.system, p.user)
}

fn acceptance_8_prompt_fidelity() {
    check(8, "prompt fidelity", Duration::from_secs(1), || {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/prompts");
        let reference = "void mish(const float *x, float *y, int n) {\n    for (int i = 0; i < n; i++) y[i] = x[i] * tanhf(log1pf(expf(x[i])));\n}";
        let cases = [
            (
                "summarize_idea.txt",
                render_for_golden(
                    TemplateId::SummarizeIdea,
                    &[(
                        "commit messages and code diff records",
                        "Commit message: Unroll the dgemm kernel by 4\nCode diff:\n+ for (k = 0; k < K; k += 4)",
                    )],
                ),
                "no longer than 20 words",
            ),
            (
                "seed_init.txt",
                render_for_golden(
                    TemplateId::SeedInit,
                    &[
                        ("operation", "Mish"),
                        ("hardware_type", "Spacemit K1"),
                        ("extensions", "RVV1.0 and RVA22"),
                        ("code_of_reference_implementation", reference),
                        ("thought", "Apply vector intrinsics to process several elements per instruction"),
                        ("code_examples", "+ vl = __riscv_vsetvl_e32m8(n);"),
                    ],
                ),
                "Please modify the code by the given thought",
            ),
            (
                "eoh_step.txt",
                render_for_golden(
                    TemplateId::EohStep,
                    &[
                        ("operation", "Mish"),
                        ("hardware_type", "Spacemit K1"),
                        ("extensions", "RVV1.0 and RVA22"),
                        ("code_of_reference_implementation", reference),
                        ("kernel code", "Parent kernel 1 code:\n```c\nvoid mish(void) {}\n```"),
                    ],
                ),
                "description must be inside within boxed",
            ),
        ];
        for (file, rendered, literal) in cases {
            if std::env::var_os("KEVO_BLESS").is_some() {
                std::fs::write(dir.join(file), &rendered).map_err(|e| e.to_string())?;
            }
            let golden = std::fs::read_to_string(dir.join(file)).map_err(|e| format!("{file}: {e}"))?;
            ensure(golden.contains(literal), || format!("{file} lacks `{literal}`"))?;
            ensure(rendered == golden, || format!("{file} differs from the rendered prompt:\n{rendered}"))?;
        }
        Ok(())
    });
}

fn random_f64(rng: &mut ChaCha8Rng) -> f64 {
    match rng.random_range(0..6) {
        0 => 0.0,
        1 => -0.0,
        2 => f64::from_bits(rng.random_range(1..1u64 << 52)), // subnormal
        3 => rng.random_range(-1e300..1e300),
        _ => rng.random_range(-2.0..2.0),
    }
}

fn random_pool(rng: &mut ChaCha8Rng, case: usize) -> IdeaPool {
    let dim = rng.random_range(1..6);
    let ideas = (0..rng.random_range(1..4))
        .map(|i| Idea {
            id: format!("idea-{case}-{i}"),
            principle: format!("Apply principle {} \u{2713} \"quoted\"", rng.random::<u32>()),
            thoughts: (0..rng.random_range(1..4))
                .map(|j| Thought {
                    id: format!("t-{case}-{i}-{j}"),
                    description: format!("Use trick {}", rng.random::<u16>()),
                    code_examples: format!("+ line\n\t- {}\\n", rng.random::<u64>()),
                    efficiency: random_f64(rng),
                    member_commit_ids: (0..rng.random_range(0..3)).map(|k| format!("c{i}-{j}-{k}")).collect(),
                    embedding: (0..dim).map(|_| random_f64(rng)).collect(),
                    category: if rng.random() { Some("Loop".into()) } else { None },
                    unvalidated: rng.random(),
                })
                .collect(),
            unvalidated: rng.random(),
        })
        .collect();
    let provenance = Provenance {
        library: "lib".into(),
        embedder: format!("hash-{dim}"),
        tau: random_f64(rng),
        target_cluster_size: rng.random_range(1..10),
        idea_count: rng.random_range(1..10),
        seed: rng.random(),
        refine_rounds: rng.random_range(0..10),
        converged: rng.random(),
        mode: if rng.random() { PoolMode::TwoLevel } else { PoolMode::Clustered },
    };
    IdeaPool::new(dim, provenance, ideas).unwrap()
}

fn float_bits(p: &IdeaPool) -> Vec<u64> {
    let mut bits = vec![p.provenance.tau.to_bits()];
    for t in p.thoughts() {
        bits.push(t.efficiency.to_bits());
        bits.extend(t.embedding.iter().map(|x| x.to_bits()));
    }
    bits
}

fn acceptance_9_pool_round_trip() {
    check(9, "pool serialization round-trip", Duration::from_secs(10), || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for case in 0..1000 {
            let pool = random_pool(&mut rng, case);
            let text = pool.to_json();
            let back = IdeaPool::from_json(&text).map_err(|e| e.to_string())?;
            ensure(back == pool && float_bits(&back) == float_bits(&pool), || format!("case {case} changed"))?;
        }
        Ok(())
    });
}

fn on_path(tool: &str) -> bool {
    std::env::var_os("PATH")
        .map(|paths| std::env::split_paths(&paths).any(|d| d.join(tool).is_file()))
        .unwrap_or(false)
}

fn acceptance_10_optional_hardware_tier() {
    let compiler = std::env::var("KEVO_RISCV_CC").unwrap_or_else(|_| "riscv64-linux-gnu-gcc".into());
    let emulator = std::env::var("KEVO_RISCV_EMULATOR").unwrap_or_else(|_| "qemu-riscv64".into());
    if !on_path(&compiler) || !on_path(&emulator) {
        println!("acceptance 10 hardware tier: SKIP ({compiler} or {emulator} not found)");
        return;
    }
    check(10, "hardware tier", Duration::from_secs(600), || {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mish");
        let task = KernelTask::load(&dir.join("task.toml")).map_err(|e| e.to_string())?;
        let work = tempfile::tempdir().map_err(|e| e.to_string())?;
        let config = ExecutorConfig {
            kind: ExecutorKind::Emulator,
            compiler,
            flags: vec!["-O3".into(), "-march=rv64gcv".into(), "-static".into()],
            run_argv: Some(vec![emulator, "-cpu".into(), "rv64,v=true,vlen=256".into(), "{bin}".into()]),
            settle_ms: 0,
            warm_runs: 2,
            measured_runs: 10,
            work_dir: Some(work.path().to_path_buf()),
            ..ExecutorConfig::default()
        };
        let harness = EvalHarness::new(config).map_err(|e| e.to_string())?;
        let reference = harness.evaluate_reference(&task).map_err(|e| e.to_string())?;
        ensure(reference.correct && reference.max_rel_dev == Some(0.0), || format!("{reference:?}"))?;
        let variant = std::fs::read_to_string(dir.join("mish_rvv.c")).map_err(|e| e.to_string())?;
        let result = harness.evaluate(&variant, &task).map_err(|e| e.to_string())?;
        ensure(result.correct && result.speedup.is_some_and(|s| s > 1.0), || format!("{result:?}"))
    });
}

fn main() {
    let checks: [(&str, fn()); 10] = [
        ("acceptance_1_effectiveness_conservation", acceptance_1_effectiveness_conservation),
        ("acceptance_2_abstraction_fixed_point", acceptance_2_abstraction_fixed_point),
        ("acceptance_3_softmax_sampling_calibration", acceptance_3_softmax_sampling_calibration),
        ("acceptance_4_retrieval_oracle_equivalence", acceptance_4_retrieval_oracle_equivalence),
        ("acceptance_5_eoh_budget_and_monotonicity", acceptance_5_eoh_budget_and_monotonicity),
        ("acceptance_6_end_to_end_mock_run", acceptance_6_end_to_end_mock_run),
        ("acceptance_7_evaluation_gating", acceptance_7_evaluation_gating),
        ("acceptance_8_prompt_fidelity", acceptance_8_prompt_fidelity),
        ("acceptance_9_pool_round_trip", acceptance_9_pool_round_trip),
        ("acceptance_10_optional_hardware_tier", acceptance_10_optional_hardware_tier),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (name, body) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        if std::panic::catch_unwind(body).is_err() {
            failed.push(name);
        }
    }
    println!("acceptance: {} run, {} failed", ran, failed.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
