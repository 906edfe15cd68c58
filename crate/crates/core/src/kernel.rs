//! Kernel candidates and the per-task archive of correct kernels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalResult;
use crate::util::{self, draw_index, softmax};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Origin {
    /// 0 for the reference kernel.
    pub iteration: usize,
    pub search: Option<usize>,
    pub strategy: Option<String>,
    #[serde(default)]
    pub parents: Vec<String>,
    #[serde(default)]
    pub idea_id: Option<String>,
    #[serde(default)]
    pub thought_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCandidate {
    pub id: String,
    pub description: String,
    pub source: String,
    pub source_hash: String,
    pub eval: EvalResult,
    pub origin: Origin,
}

impl KernelCandidate {
    pub fn new(id: impl Into<String>, description: impl Into<String>, source: impl Into<String>, eval: EvalResult, origin: Origin) -> Self {
        let source = source.into();
        KernelCandidate {
            id: id.into(),
            description: description.into(),
            source_hash: util::sha256_hex(&source),
            source,
            eval,
            origin,
        }
    }

    pub fn speedup(&self) -> f64 {
        self.eval.fitness()
    }

    fn mean_latency(&self) -> f64 {
        self.eval.mean_latency_ns().unwrap_or(f64::INFINITY)
    }
}

/// Higher speedup first, then lower mean latency.
pub fn better(a: &KernelCandidate, b: &KernelCandidate) -> std::cmp::Ordering {
    b.speedup()
        .total_cmp(&a.speedup())
        .then_with(|| a.mean_latency().total_cmp(&b.mean_latency()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDatabase {
    pub schema: String,
    pub task_id: String,
    pub candidates: Vec<KernelCandidate>,
}

impl KernelDatabase {
    pub const SCHEMA: &'static str = "kevo.kernel-db/1";

    /// A database holding only the reference kernel, which must be correct.
    pub fn new(task_id: impl Into<String>, reference: KernelCandidate) -> Result<Self> {
        if !reference.eval.correct {
            return Err(Error::Reference("reference kernel is not correct".into()));
        }
        Ok(KernelDatabase {
            schema: Self::SCHEMA.into(),
            task_id: task_id.into(),
            candidates: vec![reference],
        })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn reference(&self) -> &KernelCandidate {
        &self.candidates[0]
    }

    pub fn contains_source(&self, source_hash: &str) -> bool {
        self.candidates.iter().any(|c| c.source_hash == source_hash)
    }

    /// Adds a correct candidate with an unseen source. Returns whether it was added.
    pub fn insert(&mut self, candidate: KernelCandidate) -> bool {
        if !candidate.eval.correct || self.contains_source(&candidate.source_hash) {
            return false;
        }
        self.candidates.push(candidate);
        true
    }

    /// Best by speedup, then latency, then insertion order.
    pub fn best(&self) -> &KernelCandidate {
        self.candidates
            .iter()
            .min_by(|a, b| better(a, b))
            .expect("database holds the reference")
    }

    /// `p ∝ exp(speedup / temperature)`.
    pub fn probabilities(&self, temperature: f64) -> Vec<f64> {
        let s: Vec<f64> = self.candidates.iter().map(KernelCandidate::speedup).collect();
        softmax(&s, temperature)
    }

    pub fn sample<R: Rng + ?Sized>(&self, temperature: f64, rng: &mut R) -> &KernelCandidate {
        &self.candidates[draw_index(&self.probabilities(temperature), rng)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{LatencyStats, Stage};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn cand(id: &str, src: &str, speedup: f64, mean: f64) -> KernelCandidate {
        let lat = LatencyStats::from_samples(vec![mean]).unwrap();
        KernelCandidate::new(id, "d", src, EvalResult::passed(0.0, lat, speedup), Origin::default())
    }

    #[test]
    fn singleton_always_sampled() {
        let db = KernelDatabase::new("t", cand("ref", "r", 1.0, 10.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(db.sample(1.0, &mut rng).id, "ref");
    }

    #[test]
    fn softmax_over_speedups() {
        let mut db = KernelDatabase::new("t", cand("ref", "r", 1.0, 10.0)).unwrap();
        db.insert(cand("b", "b", 1.0 + 2f64.ln(), 5.0));
        let p = db.probabilities(1.0);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-12 && (p[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gating_and_dedup() {
        let mut db = KernelDatabase::new("t", cand("ref", "r", 1.0, 10.0)).unwrap();
        assert!(!db.insert(cand("dup", "r", 2.0, 5.0)));
        let bad = KernelCandidate::new("x", "d", "x", EvalResult::failed(Stage::Run, "boom", None), Origin::default());
        assert!(!db.insert(bad));
        assert_eq!(db.len(), 1);
    }

    #[test]
    fn best_prefers_lower_latency_on_ties() {
        let mut db = KernelDatabase::new("t", cand("ref", "r", 1.0, 10.0)).unwrap();
        db.insert(cand("a", "a", 1.5, 7.0));
        db.insert(cand("b", "b", 1.5, 6.0));
        assert_eq!(db.best().id, "b");
    }
}
