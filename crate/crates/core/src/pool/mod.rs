//! The idea pool: general ideas, each owning actionable thoughts distilled
//! from commit history, plus the sampling and feedback used during search.

mod abstraction;
pub mod kmeans;
mod seeds;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{self, draw_index, softmax};

pub use abstraction::{
    assign_commits, build_pool, cluster_unassigned, distill_ideas, distill_thoughts,
    finalize_thoughts, refine_pairing, DistillOptions, PoolBuildConfig, RefineOutcome,
    DEFAULT_VERBS, TRUNCATION_MARKER,
};
pub use seeds::{init_thought_seeds, SEED_THOUGHTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thought {
    pub id: String,
    pub description: String,
    pub code_examples: String,
    pub efficiency: f64,
    pub member_commit_ids: Vec<String>,
    pub embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    /// The description failed validation and fell back to a commit message.
    #[serde(default)]
    pub unvalidated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Idea {
    pub id: String,
    pub principle: String,
    pub thoughts: Vec<Thought>,
    #[serde(default)]
    pub unvalidated: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub library: String,
    pub embedder: String,
    pub tau: f64,
    pub target_cluster_size: usize,
    pub idea_count: usize,
    pub seed: u64,
    pub refine_rounds: usize,
    pub converged: bool,
    #[serde(default)]
    pub mode: PoolMode,
}

/// How commits are organized into ideas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    /// Commits paired with distilled thoughts, thoughts grouped into ideas.
    #[default]
    TwoLevel,
    /// Each commit is a thought; k-means groups of commits are the ideas.
    Clustered,
    /// Each commit is a thought, all under a single idea.
    RawCommits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdeaPool {
    pub schema: String,
    pub embedding_dim: usize,
    pub provenance: Provenance,
    pub ideas: Vec<Idea>,
}

/// Commit-to-thought mapping produced by nearest-thought assignment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Assignment {
    pub mapping: BTreeMap<String, String>,
    pub distances: BTreeMap<String, f64>,
    pub unassigned: Vec<String>,
}

impl Assignment {
    /// Commit groups as sorted id lists, independent of thought ids.
    pub fn partition(&self) -> Vec<Vec<String>> {
        let mut by_thought: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for (commit, thought) in &self.mapping {
            by_thought.entry(thought).or_default().push(commit.clone());
        }
        let mut groups: Vec<Vec<String>> = by_thought.into_values().collect();
        groups.iter_mut().for_each(|g| g.sort());
        groups.sort();
        groups
    }

    pub fn members_of(&self, thought_id: &str) -> Vec<&str> {
        self.mapping
            .iter()
            .filter(|(_, t)| t.as_str() == thought_id)
            .map(|(c, _)| c.as_str())
            .collect()
    }
}

impl IdeaPool {
    pub const SCHEMA: &'static str = "kevo.idea-pool/1";

    pub fn new(embedding_dim: usize, provenance: Provenance, ideas: Vec<Idea>) -> Result<Self> {
        let pool = IdeaPool {
            schema: Self::SCHEMA.to_string(),
            embedding_dim,
            provenance,
            ideas,
        };
        pool.validate()?;
        Ok(pool)
    }

    pub fn thoughts(&self) -> impl Iterator<Item = &Thought> {
        self.ideas.iter().flat_map(|i| i.thoughts.iter())
    }

    pub fn thought_count(&self) -> usize {
        self.ideas.iter().map(|i| i.thoughts.len()).sum()
    }

    pub fn idea(&self, id: &str) -> Option<&Idea> {
        self.ideas.iter().find(|i| i.id == id)
    }

    /// Checks the partition and shape invariants.
    pub fn validate(&self) -> Result<()> {
        if self.schema != Self::SCHEMA {
            return Err(Error::Schema(format!(
                "expected schema `{}`, found `{}`",
                Self::SCHEMA,
                self.schema
            )));
        }
        let mut idea_ids = HashSet::new();
        let mut thought_ids = HashSet::new();
        let mut commit_ids = HashSet::new();
        for idea in &self.ideas {
            if !idea_ids.insert(idea.id.as_str()) {
                return Err(Error::Schema(format!("duplicate idea id `{}`", idea.id)));
            }
            if idea.thoughts.is_empty() {
                return Err(Error::Schema(format!("idea `{}` has no thoughts", idea.id)));
            }
            for t in &idea.thoughts {
                if !thought_ids.insert(t.id.as_str()) {
                    return Err(Error::Schema(format!("thought `{}` appears more than once", t.id)));
                }
                if t.description.trim().is_empty() {
                    return Err(Error::Schema(format!("thought `{}` has an empty description", t.id)));
                }
                if !t.efficiency.is_finite() {
                    return Err(Error::Schema(format!("thought `{}` has non-finite efficiency", t.id)));
                }
                if !t.embedding.is_empty() && t.embedding.len() != self.embedding_dim {
                    return Err(Error::Schema(format!(
                        "thought `{}` embedding has dimension {} (pool: {})",
                        t.id,
                        t.embedding.len(),
                        self.embedding_dim
                    )));
                }
                for c in &t.member_commit_ids {
                    if !commit_ids.insert(c.as_str()) {
                        return Err(Error::Schema(format!("commit `{c}` belongs to more than one thought")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pool serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let pool: IdeaPool =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("idea pool: {e}")))?;
        pool.validate()?;
        Ok(pool)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = util::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_json(path, self)
    }

    /// Blends observed speedup deltas into thought efficiencies:
    /// `phi <- (1 - alpha) * phi + alpha * delta`, applied in list order.
    /// Unknown ids leave the pool untouched.
    pub fn update_efficiencies(&mut self, usage: &[(String, f64)], alpha: f64) -> Result<()> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1], got {alpha}")));
        }
        let known: HashSet<&str> = self.thoughts().map(|t| t.id.as_str()).collect();
        if let Some((id, _)) = usage.iter().find(|(id, _)| !known.contains(id.as_str())) {
            return Err(Error::State(format!("unknown thought id `{id}`")));
        }
        for (id, delta) in usage {
            let t = self
                .ideas
                .iter_mut()
                .flat_map(|i| i.thoughts.iter_mut())
                .find(|t| &t.id == id)
                .expect("checked above");
            t.efficiency = (1.0 - alpha) * t.efficiency + alpha * delta;
        }
        Ok(())
    }
}

/// Uniform draw over the pool's ideas.
pub fn sample_idea<'a, R: Rng + ?Sized>(pool: &'a IdeaPool, rng: &mut R) -> Result<&'a Idea> {
    if pool.ideas.is_empty() {
        return Err(Error::State("cannot sample from an empty idea pool".into()));
    }
    Ok(&pool.ideas[rng.random_range(0..pool.ideas.len())])
}

/// Softmax over thought efficiencies at `temperature`.
pub fn thought_probabilities(idea: &Idea, temperature: f64) -> Vec<f64> {
    let phis: Vec<f64> = idea.thoughts.iter().map(|t| t.efficiency).collect();
    softmax(&phis, temperature)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThoughtSample {
    pub thoughts: Vec<Thought>,
    /// More thoughts were requested than the idea owns.
    pub with_replacement: bool,
}

/// Draws `count` thoughts with `p ∝ exp(phi / temperature)`, without
/// replacement when the idea has enough thoughts.
pub fn sample_thoughts<R: Rng + ?Sized>(
    idea: &Idea,
    count: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<ThoughtSample> {
    if count == 0 {
        return Err(Error::Config("thought sample count must be at least 1".into()));
    }
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
    }
    if idea.thoughts.is_empty() {
        return Err(Error::State(format!("idea `{}` has no thoughts", idea.id)));
    }
    let probs = thought_probabilities(idea, temperature);
    if count > idea.thoughts.len() {
        let thoughts = (0..count)
            .map(|_| idea.thoughts[draw_index(&probs, rng)].clone())
            .collect();
        return Ok(ThoughtSample {
            thoughts,
            with_replacement: true,
        });
    }
    let mut remaining = probs;
    let mut thoughts = Vec::with_capacity(count);
    for _ in 0..count {
        let i = draw_index(&remaining, rng);
        remaining[i] = 0.0;
        thoughts.push(idea.thoughts[i].clone());
    }
    Ok(ThoughtSample {
        thoughts,
        with_replacement: false,
    })
}
