//! Commit-history ingestion, filtering, embedding and effectiveness attribution.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{ChatRequest, Gateway, RenderedPrompt};
use crate::util;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCommit {
    pub id: String,
    /// Seconds since the epoch. Not assumed monotone across the log.
    pub timestamp: i64,
    pub message: String,
    pub diff: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CommitFlags {
    /// Outside every benchmark window; effectiveness forced to zero.
    pub unwindowed: bool,
    /// The relevance classifier could not be reached; kept anyway.
    pub unclassified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Commit {
    pub raw: RawCommit,
    pub embedding: Vec<f64>,
    pub effectiveness: f64,
    #[serde(default)]
    pub flags: CommitFlags,
}

impl Commit {
    pub fn id(&self) -> &str {
        &self.raw.id
    }
}

/// A benchmark snapshot of the whole library.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpeRecord {
    pub timestamp: i64,
    pub relative_performance: f64,
}

#[derive(Deserialize)]
struct CommitLine {
    id: String,
    ts: i64,
    msg: String,
    diff: String,
}

/// Reads the JSON-lines commit export (`{"id","ts","msg","diff"}` per line).
pub fn ingest_commits<R: BufRead>(mut reader: R) -> Result<Vec<RawCommit>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut offset = 0usize;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| Error::Parse {
                offset,
                detail: e.to_string(),
            })?;
        if n == 0 {
            break;
        }
        if !line.trim().is_empty() {
            let rec: CommitLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                offset,
                detail: e.to_string(),
            })?;
            if rec.id.is_empty() {
                return Err(Error::Parse {
                    offset,
                    detail: "empty commit id".into(),
                });
            }
            if !seen.insert(rec.id.clone()) {
                return Err(Error::Conflict(format!(
                    "duplicate commit id `{}` at byte {offset}",
                    rec.id
                )));
            }
            out.push(RawCommit {
                id: rec.id,
                timestamp: rec.ts,
                message: rec.msg,
                diff: rec.diff,
            });
        }
        offset += n;
    }
    Ok(out)
}

pub fn ingest_commits_file(path: &Path) -> Result<Vec<RawCommit>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_commits(std::io::BufReader::new(file))
}

/// Reads `ts,perf` CSV snapshots.
pub fn read_ppes<R: std::io::Read>(reader: R) -> Result<Vec<PpeRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            offset: 0,
            detail: e.to_string(),
        })?
        .clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["ts", "perf"] {
        return Err(Error::Parse {
            offset: 0,
            detail: format!("expected header `ts,perf`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            offset: e.position().map_or(0, |p| p.byte() as usize),
            detail: e.to_string(),
        })?;
        let offset = row.position().map_or(0, |p| p.byte() as usize);
        let field = |i: usize| row.get(i).map(str::trim).unwrap_or("");
        let timestamp = field(0).parse::<i64>().map_err(|e| Error::Parse {
            offset,
            detail: format!("ts: {e}"),
        })?;
        let relative_performance = field(1).parse::<f64>().map_err(|e| Error::Parse {
            offset,
            detail: format!("perf: {e}"),
        })?;
        out.push(PpeRecord {
            timestamp,
            relative_performance,
        });
    }
    Ok(out)
}

pub fn read_ppes_file(path: &Path) -> Result<Vec<PpeRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ppes(file)
}

/// Deny patterns applied case-insensitively to commit messages.
pub const DEFAULT_DENY_PATTERNS: &[&str] = &[
    r"\bformat(ting|ted)?\b",
    r"\bclang-format\b",
    r"\bwhitespace\b",
    r"\bcode style\b",
    r"\bversion\b",
    r"\bbump\b",
    r"\brelease notes?\b",
    r"\bci\b",
    r"\btravis\b",
    r"\bappveyor\b",
    r"\bgithub actions\b",
    r"\bworkflows?\b",
    r"\bdocs?\b",
    r"\bdocumentation\b",
    r"\breadme\b",
    r"\bchangelog\b",
    r"\btypos?\b",
];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterRules {
    /// Extra deny patterns; the defaults always apply.
    pub deny_patterns: Vec<String>,
    pub use_llm_classifier: bool,
}

impl FilterRules {
    pub fn compile(&self) -> Result<Vec<Regex>> {
        DEFAULT_DENY_PATTERNS
            .iter()
            .copied()
            .chain(self.deny_patterns.iter().map(String::as_str))
            .map(|p| {
                RegexBuilder::new(p)
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| Error::Config(format!("deny pattern `{p}`: {e}")))
            })
            .collect()
    }
}

/// Labels commits as optimization-relevant or not.
pub trait CommitClassifier: Sync {
    fn is_optimization(&self, commit: &RawCommit) -> Result<bool>;
}

/// Yes/no classification through the chat gateway.
pub struct LlmClassifier<'a> {
    pub gateway: &'a Gateway,
}

impl CommitClassifier for LlmClassifier<'_> {
    fn is_optimization(&self, commit: &RawCommit) -> Result<bool> {
        let prompt = RenderedPrompt {
            system: "You classify commits of a high-performance kernel library.".into(),
            user: format!(
                "Does the following commit change kernel code to improve performance? Answer yes or no.\n\n{}",
                commit.message
            ),
        };
        let reply = self
            .gateway
            .chat(&ChatRequest::new("classify_commit", prompt).with_sampling(0.0, 8))?;
        let answer = reply.text.trim().to_ascii_lowercase();
        if answer.starts_with("yes") {
            Ok(true)
        } else if answer.starts_with("no") {
            Ok(false)
        } else {
            Err(Error::Protocol(format!("classifier reply `{}` is neither yes nor no", reply.text.trim())))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterOutcome {
    pub kept: Vec<RawCommit>,
    /// Ids kept because the classifier failed (fail-open).
    pub unclassified: Vec<String>,
}

pub fn filter_commits(
    commits: &[RawCommit],
    rules: &FilterRules,
    classifier: Option<&dyn CommitClassifier>,
) -> Result<FilterOutcome> {
    let deny = rules.compile()?;
    let classifier = match (rules.use_llm_classifier, classifier) {
        (true, None) => {
            return Err(Error::Config(
                "use_llm_classifier is set but no classifier is available".into(),
            ))
        }
        (true, Some(c)) => Some(c),
        (false, _) => None,
    };
    let mut out = FilterOutcome::default();
    for commit in commits {
        if deny.iter().any(|re| re.is_match(&commit.message)) {
            continue;
        }
        if let Some(c) = classifier {
            match c.is_optimization(commit) {
                Ok(true) => {}
                Ok(false) => continue,
                Err(e) => {
                    tracing::warn!(commit = %commit.id, error = %e, "classifier failed; keeping commit");
                    out.unclassified.push(commit.id.clone());
                }
            }
        }
        out.kept.push(commit.clone());
    }
    Ok(out)
}

/// Embeds commit messages. Effectiveness is left at zero.
pub fn embed_messages(commits: &[RawCommit], gateway: &Gateway) -> Result<Vec<Commit>> {
    let texts: Vec<String> = commits.iter().map(|c| c.message.clone()).collect();
    let vectors = gateway.embed(&texts)?;
    Ok(commits
        .iter()
        .cloned()
        .zip(vectors)
        .map(|(raw, embedding)| Commit {
            raw,
            embedding,
            effectiveness: 0.0,
            flags: CommitFlags::default(),
        })
        .collect())
}

/// Whether a larger library performance index means faster code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerfDirection {
    #[default]
    HigherIsBetter,
    LowerIsBetter,
}

impl PerfDirection {
    /// Relative improvement between two consecutive snapshots.
    pub fn improvement(self, before: f64, after: f64) -> f64 {
        match self {
            PerfDirection::HigherIsBetter => (after - before) / before,
            PerfDirection::LowerIsBetter => (before - after) / before,
        }
    }
}

/// Assigns each commit the share of its benchmark window's relative
/// improvement. Windows are half-open `[t_k, t_{k+1})` over the sorted
/// snapshots. Shares are uniform unless `weight` is given, in which case they
/// are proportional to it.
pub fn estimate_effectiveness(
    mut commits: Vec<Commit>,
    ppes: &[PpeRecord],
    direction: PerfDirection,
    weight: Option<&dyn Fn(&Commit) -> f64>,
) -> Result<Vec<Commit>> {
    if ppes.len() < 2 {
        return Err(Error::Config(format!(
            "effectiveness needs at least 2 performance snapshots, got {}",
            ppes.len()
        )));
    }
    let mut snapshots = ppes.to_vec();
    snapshots.sort_by_key(|p| p.timestamp);

    let improvements: Vec<f64> = snapshots
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            if w[0].relative_performance == 0.0 {
                return Err(Error::Arithmetic(format!(
                    "window {k} [{}, {}) has zero baseline performance",
                    w[0].timestamp, w[1].timestamp
                )));
            }
            Ok(direction.improvement(w[0].relative_performance, w[1].relative_performance))
        })
        .collect::<Result<_>>()?;

    let window_of = |ts: i64| -> Option<usize> {
        let upper = snapshots.partition_point(|p| p.timestamp <= ts);
        (upper >= 1 && upper < snapshots.len()).then(|| upper - 1)
    };

    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in commits.iter_mut().enumerate() {
        match window_of(c.raw.timestamp) {
            Some(k) => members.entry(k).or_default().push(i),
            None => {
                c.effectiveness = 0.0;
                c.flags.unwindowed = true;
            }
        }
    }

    for (k, idx) in members {
        let delta = improvements[k];
        match weight {
            None => {
                let share = delta / idx.len() as f64;
                for i in idx {
                    commits[i].effectiveness = share;
                    commits[i].flags.unwindowed = false;
                }
            }
            Some(w) => {
                let weights: Vec<f64> = idx.iter().map(|&i| w(&commits[i])).collect();
                let total: f64 = weights.iter().sum();
                if total <= 0.0 || !total.is_finite() || weights.iter().any(|x| *x < 0.0) {
                    return Err(Error::Arithmetic(format!(
                        "window {k} has invalid commit weights (sum {total})"
                    )));
                }
                for (i, wi) in idx.into_iter().zip(weights) {
                    commits[i].effectiveness = delta * wi / total;
                    commits[i].flags.unwindowed = false;
                }
            }
        }
    }
    Ok(commits)
}

/// Processed-commit store written by `kevo mine`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitStore {
    pub schema: String,
    pub embedding_dim: usize,
    pub embedder: String,
    pub commits: Vec<Commit>,
}

impl CommitStore {
    pub const SCHEMA: &'static str = "kevo.commits/1";

    pub fn load(path: &Path) -> Result<Self> {
        let store: CommitStore = util::read_json(path)?;
        if store.schema != Self::SCHEMA {
            return Err(Error::Schema(format!(
                "{}: expected schema `{}`, found `{}`",
                path.display(),
                Self::SCHEMA,
                store.schema
            )));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_json(path, self)
    }
}

/// How many commits survived each mining stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MineCounts {
    pub ingested: usize,
    pub kept: usize,
    pub unclassified: usize,
    pub windowed: usize,
}

/// Filter, embed and attribute effectiveness in one pass.
pub fn mine(
    raw: &[RawCommit],
    ppes: &[PpeRecord],
    rules: &FilterRules,
    direction: PerfDirection,
    gateway: &Gateway,
) -> Result<(CommitStore, MineCounts)> {
    let classifier = LlmClassifier { gateway };
    let filtered = filter_commits(raw, rules, Some(&classifier))?;
    let mut commits = estimate_effectiveness(embed_messages(&filtered.kept, gateway)?, ppes, direction, None)?;
    for c in &mut commits {
        c.flags.unclassified = filtered.unclassified.contains(&c.raw.id);
    }
    let counts = MineCounts {
        ingested: raw.len(),
        kept: commits.len(),
        unclassified: filtered.unclassified.len(),
        windowed: commits.iter().filter(|c| !c.flags.unwindowed).count(),
    };
    let store = CommitStore {
        schema: CommitStore::SCHEMA.into(),
        embedding_dim: gateway.embedding_dim(),
        embedder: gateway.embedder_id(),
        commits,
    };
    Ok((store, counts))
}
