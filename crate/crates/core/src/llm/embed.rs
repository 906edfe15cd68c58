use crate::error::{Error, Result};
use crate::util::{fnv1a64, l2_norm};

use super::EmbedBackend;

/// Scales `v` to unit length. The zero vector maps to the first basis vector.
pub fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = l2_norm(&v);
    if norm == 0.0 || !norm.is_finite() {
        v.iter_mut().for_each(|x| *x = 0.0);
        if let Some(first) = v.first_mut() {
            *first = 1.0;
        }
        return v;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Deterministic bag-of-tokens embedder for offline runs.
///
/// Text is lowercased and split on every non-alphanumeric character. Each
/// token `t` with `h = fnv1a64(t)` adds `+1` (or `-1` when bit 32 of `h` is
/// set) to component `h % dim`. The sum is then L2-normalized.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(HashEmbedder { dim })
    }

    pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
    }

    pub fn raw(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in Self::tokens(text) {
            let h = fnv1a64(token.as_bytes());
            let sign = if (h >> 32) & 1 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        v
    }
}

impl EmbedBackend for HashEmbedder {
    fn id(&self) -> String {
        format!("hash-{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| normalize(self.raw(t))).collect())
    }
}
