//! Two-level abstraction: commits are paired with thoughts until the pairing
//! is stable, then thoughts are grouped into general ideas.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::kmeans::{groups, kmeans};
use super::{init_thought_seeds, Assignment, Idea, IdeaPool, PoolMode, Provenance, Thought};
use crate::error::{Error, Result};
use crate::llm::{render_prompt, ChatRequest, Gateway, TemplateId};
use crate::miner::Commit;
use crate::util::{derive_seed, dot, l2_norm};

pub const TRUNCATION_MARKER: &str = "\n[... truncated ...]\n";

const RECORDS_SLOT: &str = "commit messages and code diff records";

/// Accepted first words of a distilled description.
pub const DEFAULT_VERBS: &[&str] = &[
    "accelerate", "add", "adjust", "adopt", "align", "allocate", "apply", "avoid", "balance",
    "batch", "block", "buffer", "bypass", "cache", "coalesce", "combine", "compute", "convert",
    "defer", "distribute", "eliminate", "employ", "enable", "ensure", "exploit", "extend", "fuse",
    "group", "handle", "hide", "hoist", "implement", "improve", "increase", "inline", "insert",
    "interleave", "introduce", "leverage", "limit", "load", "map", "mask", "maximize", "merge",
    "minimize", "move", "optimize", "overlap", "pack", "parallelize", "partition", "pin",
    "pipeline", "precompute", "predicate", "prefetch", "reduce", "refactor", "remove", "reorder",
    "replace", "restructure", "reuse", "rewrite", "schedule", "select", "share", "simplify",
    "skip", "sort", "specialize", "split", "store", "stream", "streamline", "switch", "tile",
    "transpose", "tune", "unify", "unroll", "use", "utilize", "vectorize", "widen",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillOptions {
    /// Lower-case verbs a description may start with.
    pub verbs: Vec<String>,
    pub max_words: usize,
    /// Per-commit cap on diff bytes quoted in the summarization prompt.
    pub record_diff_bytes: usize,
    pub temperature: f64,
}

impl Default for DistillOptions {
    fn default() -> Self {
        DistillOptions {
            verbs: DEFAULT_VERBS.iter().map(|v| v.to_string()).collect(),
            max_words: 20,
            record_diff_bytes: 1500,
            temperature: 0.2,
        }
    }
}

impl DistillOptions {
    /// Normalizes a reply and checks it against the word bound and verb lexicon.
    pub fn validate(&self, reply: &str) -> Option<String> {
        let line = reply.lines().map(str::trim).find(|l| !l.is_empty())?;
        let text = line
            .trim_matches(|c: char| c == '"' || c == '\'' || c == '*' || c == '`')
            .trim();
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.is_empty() || words.len() > self.max_words {
            return None;
        }
        let first = words[0]
            .trim_matches(|c: char| !c.is_alphabetic())
            .to_lowercase();
        self.verbs
            .iter()
            .any(|v| v.eq_ignore_ascii_case(&first))
            .then(|| text.to_string())
    }

    fn fallback(&self, text: &str) -> String {
        let line = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
        let words: Vec<&str> = line.split_whitespace().take(self.max_words).collect();
        if words.is_empty() {
            "Unlabeled change".to_string()
        } else {
            words.join(" ")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolBuildConfig {
    pub library: String,
    /// Assignment threshold on `1 - cosine`.
    pub tau: f64,
    pub target_cluster_size: usize,
    pub idea_count: usize,
    /// Set from the top-level `seed`.
    #[serde(skip)]
    pub seed: u64,
    pub max_rounds: usize,
    pub code_budget_bytes: usize,
    pub mode: PoolMode,
    pub distill: DistillOptions,
}

impl Default for PoolBuildConfig {
    fn default() -> Self {
        PoolBuildConfig {
            library: "unknown".into(),
            tau: 0.05,
            target_cluster_size: 8,
            idea_count: 8,
            seed: 0,
            max_rounds: 10,
            code_budget_bytes: 16 * 1024,
            mode: PoolMode::TwoLevel,
            distill: DistillOptions::default(),
        }
    }
}

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot(a, b) / (na * nb)
}

/// Maps each commit to its nearest thought when the distance is below `tau`.
/// Ties go to the lexicographically lowest thought id.
pub fn assign_commits(thoughts: &[Thought], commits: &[Commit], tau: f64) -> Result<Assignment> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    let mut order: Vec<&Thought> = thoughts.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    for t in &order {
        if t.embedding.is_empty() {
            return Err(Error::Invariant(format!("thought `{}` has no embedding", t.id)));
        }
    }
    let mut out = Assignment::default();
    for c in commits {
        let mut best: Option<(&Thought, f64)> = None;
        for t in &order {
            if t.embedding.len() != c.embedding.len() {
                return Err(Error::Invariant(format!(
                    "commit `{}` embedding dimension {} differs from thought `{}` ({})",
                    c.id(),
                    c.embedding.len(),
                    t.id,
                    t.embedding.len()
                )));
            }
            let d = cosine_distance(&c.embedding, &t.embedding);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((t, d));
            }
        }
        match best {
            Some((t, d)) if d < tau => {
                out.mapping.insert(c.id().to_string(), t.id.clone());
                out.distances.insert(c.id().to_string(), d);
            }
            _ => out.unassigned.push(c.id().to_string()),
        }
    }
    out.unassigned.sort();
    Ok(out)
}

/// k-means over message embeddings; every commit lands in exactly one
/// non-empty cluster.
pub fn cluster_unassigned<'a>(
    commits: &[&'a Commit],
    cluster_count: usize,
    seed: u64,
) -> Result<Vec<Vec<&'a Commit>>> {
    let points: Vec<Vec<f64>> = commits.iter().map(|c| c.embedding.clone()).collect();
    let labels = kmeans(&points, cluster_count, seed)?;
    Ok(groups(&labels)
        .into_iter()
        .map(|g| g.into_iter().map(|i| commits[i]).collect())
        .collect())
}

fn clip(text: &str, max_bytes: usize) -> &str {
    if text.len() <= max_bytes {
        return text;
    }
    let mut end = max_bytes;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    &text[..end]
}

fn commit_records(commits: &[&Commit], diff_bytes: usize) -> String {
    commits
        .iter()
        .map(|c| {
            format!(
                "Commit message: {}\nCode diff:\n{}",
                c.raw.message.trim(),
                clip(&c.raw.diff, diff_bytes)
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// One summarization exchange with a single re-prompt. `None` means both
/// replies failed validation.
fn summarize(gateway: &Gateway, tag: &str, records: &str, opts: &DistillOptions) -> Result<Option<String>> {
    let prompt = render_prompt(TemplateId::SummarizeIdea, [(RECORDS_SLOT, records)])?;
    let mut request = ChatRequest::new(tag, prompt).with_sampling(opts.temperature, 256);
    for reprompt in [false, true] {
        request.reprompt = reprompt;
        let reply = gateway.chat(&request)?;
        if let Some(text) = opts.validate(&reply.text) {
            return Ok(Some(text));
        }
        tracing::debug!(tag, reply = %reply.text, "summary rejected");
    }
    Ok(None)
}

/// Summarizes each cluster into a new, embedded thought. Ids are
/// `r{round}-t{index}`.
pub fn distill_thoughts(
    clusters: &[Vec<&Commit>],
    gateway: &Gateway,
    round: usize,
    opts: &DistillOptions,
) -> Result<Vec<Thought>> {
    let mut thoughts = Vec::with_capacity(clusters.len());
    for (i, cluster) in clusters.iter().enumerate() {
        let first = cluster
            .first()
            .ok_or_else(|| Error::Invariant("cannot distill an empty cluster".into()))?;
        let records = commit_records(cluster, opts.record_diff_bytes);
        let (description, unvalidated) = match summarize(gateway, "summarize_thought", &records, opts)? {
            Some(d) => (d, false),
            None => (opts.fallback(&first.raw.message), true),
        };
        thoughts.push(Thought {
            id: format!("r{round}-t{i:03}"),
            description,
            code_examples: String::new(),
            efficiency: 0.0,
            member_commit_ids: cluster.iter().map(|c| c.id().to_string()).collect(),
            embedding: Vec::new(),
            category: None,
            unvalidated,
        });
    }
    embed_thoughts(&mut thoughts, gateway)?;
    Ok(thoughts)
}

fn embed_thoughts(thoughts: &mut [Thought], gateway: &Gateway) -> Result<()> {
    let pending: Vec<usize> = (0..thoughts.len())
        .filter(|&i| thoughts[i].embedding.is_empty())
        .collect();
    let texts: Vec<String> = pending.iter().map(|&i| thoughts[i].description.clone()).collect();
    for (i, v) in pending.into_iter().zip(gateway.embed(&texts)?) {
        thoughts[i].embedding = v;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub thoughts: Vec<Thought>,
    pub assignment: Assignment,
    pub rounds: usize,
    pub converged: bool,
}

/// Repeats assign, cluster the leftovers, re-summarize, until every commit
/// is assigned and the commit partition stops changing, or `max_rounds`.
pub fn refine_pairing(
    commits: &[Commit],
    seed_thoughts: Vec<Thought>,
    gateway: &Gateway,
    config: &PoolBuildConfig,
) -> Result<RefineOutcome> {
    if config.max_rounds == 0 {
        return Err(Error::Config("max_rounds must be at least 1".into()));
    }
    if config.target_cluster_size == 0 {
        return Err(Error::Config("target_cluster_size must be at least 1".into()));
    }
    let by_id: BTreeMap<&str, &Commit> = commits.iter().map(|c| (c.id(), c)).collect();
    let mut thoughts = seed_thoughts;
    embed_thoughts(&mut thoughts, gateway)?;
    let mut previous: Option<Vec<Vec<String>>> = None;
    for round in 1..=config.max_rounds {
        let assignment = assign_commits(&thoughts, commits, config.tau)?;
        let partition = assignment.partition();
        let stable = assignment.unassigned.is_empty()
            && (round == 1 || previous.as_ref() == Some(&partition));
        tracing::debug!(round, unassigned = assignment.unassigned.len(), stable, "refine round");
        if stable || round == config.max_rounds {
            return Ok(RefineOutcome {
                thoughts,
                assignment,
                rounds: round,
                converged: stable,
            });
        }
        let mut clusters: Vec<Vec<&Commit>> = Vec::new();
        let mut sorted: Vec<&Thought> = thoughts.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        for t in sorted {
            let members: Vec<&Commit> = assignment.members_of(&t.id).iter().map(|c| by_id[c]).collect();
            if !members.is_empty() {
                clusters.push(members);
            }
        }
        if !assignment.unassigned.is_empty() {
            let leftovers: Vec<&Commit> = assignment.unassigned.iter().map(|c| by_id[c.as_str()]).collect();
            let k = leftovers.len().div_ceil(config.target_cluster_size);
            clusters.extend(cluster_unassigned(
                &leftovers,
                k,
                derive_seed(config.seed, &[round as u64]),
            )?);
        }
        thoughts = distill_thoughts(&clusters, gateway, round, &config.distill)?;
        previous = Some(partition);
    }
    unreachable!("loop returns on the last round")
}

fn truncate_code(code: String, budget: usize) -> String {
    if code.len() <= budget {
        return code;
    }
    let mut out = clip(&code, budget).to_string();
    out.push_str(TRUNCATION_MARKER);
    out
}

/// Fills code examples and efficiency from member commits. Thoughts without
/// members are dropped. Members are ordered by timestamp, then id.
pub fn finalize_thoughts(
    thoughts: &[Thought],
    assignment: &Assignment,
    commits: &[Commit],
    code_budget_bytes: usize,
) -> Vec<Thought> {
    let by_id: BTreeMap<&str, &Commit> = commits.iter().map(|c| (c.id(), c)).collect();
    thoughts
        .iter()
        .filter_map(|t| {
            let mut members: Vec<&Commit> = assignment
                .members_of(&t.id)
                .into_iter()
                .filter_map(|id| by_id.get(id).copied())
                .collect();
            if members.is_empty() {
                return None;
            }
            members.sort_by(|a, b| a.raw.timestamp.cmp(&b.raw.timestamp).then(a.id().cmp(b.id())));
            let mut code = String::new();
            for m in &members {
                if !code.is_empty() && !code.ends_with('\n') {
                    code.push('\n');
                }
                code.push_str(&m.raw.diff);
            }
            Some(Thought {
                code_examples: truncate_code(code, code_budget_bytes),
                efficiency: members.iter().map(|m| m.effectiveness).sum(),
                member_commit_ids: members.iter().map(|m| m.id().to_string()).collect(),
                ..t.clone()
            })
        })
        .collect()
}

/// Groups thoughts into `idea_count` ideas by k-means over their embeddings
/// and names each group with a summarized principle.
pub fn distill_ideas(
    thoughts: &[Thought],
    idea_count: usize,
    seed: u64,
    gateway: &Gateway,
    opts: &DistillOptions,
) -> Result<Vec<Idea>> {
    let points: Vec<Vec<f64>> = thoughts.iter().map(|t| t.embedding.clone()).collect();
    if points.iter().any(Vec::is_empty) {
        return Err(Error::Invariant("every thought needs an embedding before grouping".into()));
    }
    let labels = kmeans(&points, idea_count, seed)?;
    let mut ideas = Vec::with_capacity(idea_count);
    for (i, group) in groups(&labels).into_iter().enumerate() {
        let members: Vec<Thought> = group.iter().map(|&j| thoughts[j].clone()).collect();
        let records = members
            .iter()
            .map(|t| format!("Thought: {}", t.description))
            .collect::<Vec<_>>()
            .join("\n");
        let (principle, unvalidated) = match summarize(gateway, "summarize_idea", &records, opts)? {
            Some(p) => (p, false),
            None => (members[0].description.clone(), true),
        };
        ideas.push(Idea {
            id: format!("idea-{i:02}"),
            principle,
            thoughts: members,
            unvalidated,
        });
    }
    Ok(ideas)
}

/// Seeds, refines, finalizes and groups: the full pool build.
/// A thought standing for a single commit, without any distillation.
fn commit_thought(c: &Commit, config: &PoolBuildConfig) -> Thought {
    Thought {
        id: format!("commit-{}", c.id()),
        description: config.distill.fallback(&c.raw.message),
        code_examples: truncate_code(c.raw.diff.clone(), config.code_budget_bytes),
        efficiency: c.effectiveness,
        member_commit_ids: vec![c.id().to_string()],
        embedding: c.embedding.clone(),
        category: None,
        unvalidated: false,
    }
}

fn undistilled_pool(commits: &[Commit], gateway: &Gateway, config: &PoolBuildConfig) -> Result<IdeaPool> {
    if commits.is_empty() {
        return Err(Error::State("no commits to build a pool from".into()));
    }
    let ideas = match config.mode {
        PoolMode::RawCommits => vec![Idea {
            id: "idea-00".into(),
            principle: "Unorganized optimization commits".into(),
            thoughts: commits.iter().map(|c| commit_thought(c, config)).collect(),
            unvalidated: false,
        }],
        _ => {
            let refs: Vec<&Commit> = commits.iter().collect();
            let k = commits.len().div_ceil(config.target_cluster_size.max(1));
            cluster_unassigned(&refs, k, derive_seed(config.seed, &[u64::MAX]))?
                .into_iter()
                .enumerate()
                .map(|(i, group)| Idea {
                    id: format!("idea-{i:02}"),
                    principle: config.distill.fallback(&group[0].raw.message),
                    thoughts: group.iter().map(|c| commit_thought(c, config)).collect(),
                    unvalidated: true,
                })
                .collect()
        }
    };
    let provenance = Provenance {
        library: config.library.clone(),
        embedder: gateway.embedder_id(),
        tau: config.tau,
        target_cluster_size: config.target_cluster_size,
        idea_count: ideas.len(),
        seed: config.seed,
        refine_rounds: 0,
        converged: true,
        mode: config.mode,
    };
    IdeaPool::new(gateway.embedding_dim(), provenance, ideas)
}

pub fn build_pool(commits: &[Commit], gateway: &Gateway, config: &PoolBuildConfig) -> Result<IdeaPool> {
    if config.mode != PoolMode::TwoLevel {
        return undistilled_pool(commits, gateway, config);
    }
    if config.idea_count == 0 {
        return Err(Error::Config("idea_count must be at least 1".into()));
    }
    let outcome = refine_pairing(commits, init_thought_seeds(), gateway, config)?;
    if !outcome.converged {
        tracing::warn!(rounds = outcome.rounds, "thought pairing did not converge");
    }
    let thoughts = finalize_thoughts(
        &outcome.thoughts,
        &outcome.assignment,
        commits,
        config.code_budget_bytes,
    );
    if thoughts.is_empty() {
        return Err(Error::State("no commit was assigned to any thought".into()));
    }
    let idea_count = config.idea_count.min(thoughts.len());
    if idea_count < config.idea_count {
        tracing::warn!(requested = config.idea_count, idea_count, "fewer thoughts than requested ideas");
    }
    let ideas = distill_ideas(
        &thoughts,
        idea_count,
        derive_seed(config.seed, &[u64::MAX]),
        gateway,
        &config.distill,
    )?;
    let provenance = Provenance {
        library: config.library.clone(),
        embedder: gateway.embedder_id(),
        tau: config.tau,
        target_cluster_size: config.target_cluster_size,
        idea_count,
        seed: config.seed,
        refine_rounds: outcome.rounds,
        converged: outcome.converged,
        mode: PoolMode::TwoLevel,
    };
    IdeaPool::new(gateway.embedding_dim(), provenance, ideas)
}
