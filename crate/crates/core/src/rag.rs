//! Reference-document chunking, exact cosine retrieval and prompt augmentation.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::Gateway;
use crate::util::{self, dot};

pub const CONTEXT_HEADER: &str = "\n\nReference context:\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub ordinal: usize,
    /// Character offset of the chunk within its document.
    pub start: usize,
    pub text: String,
    #[serde(with = "b64_vec")]
    pub embedding: Vec<f64>,
}

/// Embeddings as base64 of little-endian `f64` bytes, which keeps cache files
/// compact and bit-exact.
mod b64_vec {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = STANDARD.decode(text).map_err(serde::de::Error::custom)?;
        if bytes.len() % 8 != 0 {
            return Err(serde::de::Error::custom("embedding byte length is not a multiple of 8"));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalIndex {
    pub schema: String,
    pub embedding_dim: usize,
    pub embedder: String,
    pub chunk_size: usize,
    pub overlap: usize,
    pub chunks: Vec<Chunk>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DocFormat {
    Text,
    Markdown,
    PdfExtractedText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub doc_id: String,
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: DocFormat,
}

fn default_format() -> DocFormat {
    DocFormat::Text
}

/// Reads a corpus manifest and the documents it names. Relative paths are
/// resolved against the manifest's directory.
pub fn load_corpus(manifest: &Path) -> Result<Vec<(String, String)>> {
    let entries: Vec<CorpusEntry> = util::read_json(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    entries
        .into_iter()
        .map(|e| {
            let path = if e.path.is_absolute() { e.path } else { base.join(e.path) };
            Ok((e.doc_id, util::read_to_string(&path)?))
        })
        .collect()
}

/// Raw window starts before line snapping.
pub fn window_starts(len: usize, chunk_size: usize, overlap: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    if len <= chunk_size {
        return vec![0];
    }
    (0..len).step_by(chunk_size - overlap).collect()
}

fn after_newline(chars: &[char], p: usize) -> bool {
    p == 0 || chars[p - 1] == '\n'
}

/// Position in `[lo, hi]` closest to `target` that sits just after a line
/// break, preferring the earlier one on ties.
fn snap(chars: &[char], target: usize, lo: usize, hi: usize) -> Option<usize> {
    (0..=target.saturating_sub(lo).max(hi.saturating_sub(target)))
        .flat_map(|d| [target.checked_sub(d), Some(target + d)])
        .flatten()
        .find(|&p| p >= lo && p <= hi && after_newline(chars, p))
}

/// Splits `text` into overlapping windows of at most `chunk_size` characters,
/// moving each boundary up to `overlap / 2` characters to the nearest line
/// break. Consecutive chunks always touch or overlap.
pub fn chunk_text(text: &str, chunk_size: usize, overlap: usize) -> Result<Vec<(usize, String)>> {
    if chunk_size == 0 || overlap >= chunk_size {
        return Err(Error::Config(format!(
            "chunk_size ({chunk_size}) must exceed overlap ({overlap})"
        )));
    }
    let chars: Vec<char> = text.chars().collect();
    let len = chars.len();
    let radius = overlap / 2;
    let mut out: Vec<(usize, usize)> = Vec::new();
    for s in window_starts(len, chunk_size, overlap) {
        let e = (s + chunk_size).min(len);
        let start = if s == 0 {
            0
        } else {
            snap(&chars, s, s.saturating_sub(radius), (s + radius).min(len - 1)).unwrap_or(s)
        };
        let end = if e == len {
            len
        } else {
            let hi = (e + radius).min(start + chunk_size).min(len);
            let lo = e.saturating_sub(radius).max(start + 1);
            snap(&chars, e, lo, hi).unwrap_or(e.min(hi))
        };
        if end <= start || out.last() == Some(&(start, end)) {
            continue;
        }
        out.push((start, end));
    }
    Ok(out
        .into_iter()
        .map(|(s, e)| (s, chars[s..e].iter().collect()))
        .collect())
}

impl RetrievalIndex {
    pub const SCHEMA: &'static str = "kevo.rag-index/1";

    pub fn empty(embedding_dim: usize, embedder: String, chunk_size: usize, overlap: usize) -> Self {
        RetrievalIndex {
            schema: Self::SCHEMA.into(),
            embedding_dim,
            embedder,
            chunk_size,
            overlap,
            chunks: Vec::new(),
        }
    }

    /// A copy of this index with `docs` chunked and embedded on top.
    pub fn with_documents(&self, docs: &[(String, String)], gateway: &Gateway) -> Result<Self> {
        let mut out = self.clone();
        let mut pending = Vec::new();
        for (doc_id, text) in docs {
            if text.trim().is_empty() {
                tracing::warn!(doc_id, "skipping empty document");
                continue;
            }
            for (ordinal, (start, chunk)) in chunk_text(text, self.chunk_size, self.overlap)?
                .into_iter()
                .enumerate()
            {
                pending.push(Chunk {
                    doc_id: doc_id.clone(),
                    ordinal,
                    start,
                    text: chunk,
                    embedding: Vec::new(),
                });
            }
        }
        let texts: Vec<String> = pending.iter().map(|c| c.text.clone()).collect();
        for (c, e) in pending.iter_mut().zip(gateway.embed(&texts)?) {
            if e.len() != self.embedding_dim {
                return Err(Error::Invariant(format!(
                    "embedding dimension {} differs from index dimension {}",
                    e.len(),
                    self.embedding_dim
                )));
            }
            c.embedding = e;
        }
        out.chunks.extend(pending);
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != Self::SCHEMA {
            return Err(Error::Schema(format!(
                "expected schema `{}`, found `{}`",
                Self::SCHEMA,
                self.schema
            )));
        }
        if let Some(c) = self.chunks.iter().find(|c| c.embedding.len() != self.embedding_dim) {
            return Err(Error::Schema(format!(
                "chunk {}#{} has dimension {} (index: {})",
                c.doc_id,
                c.ordinal,
                c.embedding.len(),
                self.embedding_dim
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let index: RetrievalIndex = util::read_json(path)?;
        index.validate()?;
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_json(path, self)
    }
}

pub fn index_documents(
    docs: &[(String, String)],
    chunk_size: usize,
    overlap: usize,
    gateway: &Gateway,
) -> Result<RetrievalIndex> {
    RetrievalIndex::empty(gateway.embedding_dim(), gateway.embedder_id(), chunk_size, overlap)
        .with_documents(docs, gateway)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<'a> {
    pub score: f64,
    pub chunk: &'a Chunk,
}

fn rank(a: &Hit<'_>, b: &Hit<'_>) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.chunk.doc_id.cmp(&b.chunk.doc_id))
        .then_with(|| a.chunk.ordinal.cmp(&b.chunk.ordinal))
}

/// Exact top-k by cosine similarity against a unit query vector.
pub fn retrieve<'a>(index: &'a RetrievalIndex, query: &[f64], top_k: usize) -> Result<Vec<Hit<'a>>> {
    if top_k == 0 {
        return Err(Error::Config("top_k must be at least 1".into()));
    }
    if index.chunks.is_empty() {
        return Ok(Vec::new());
    }
    if query.len() != index.embedding_dim {
        return Err(Error::Invariant(format!(
            "query dimension {} differs from index dimension {}",
            query.len(),
            index.embedding_dim
        )));
    }
    let mut hits: Vec<Hit<'a>> = index
        .chunks
        .iter()
        .map(|chunk| Hit {
            score: dot(query, &chunk.embedding),
            chunk,
        })
        .collect();
    if top_k < hits.len() {
        hits.select_nth_unstable_by(top_k - 1, rank);
        hits.truncate(top_k);
    }
    hits.sort_by(rank);
    Ok(hits)
}

/// Embeds `query` and retrieves against `index`.
pub fn search<'a>(index: &'a RetrievalIndex, gateway: &Gateway, query: &str, top_k: usize) -> Result<Vec<Hit<'a>>> {
    if index.chunks.is_empty() {
        return Ok(Vec::new());
    }
    retrieve(index, &gateway.embed_one(query)?, top_k)
}

fn entry(chunk: &Chunk) -> String {
    format!("--- {} #{} ---\n{}\n", chunk.doc_id, chunk.ordinal, chunk.text)
}

/// Appends whole chunks, in order, while their formatted length fits in
/// `char_budget`. The base prompt is never altered.
pub fn augment_prompt<'a, I>(base: &str, chunks: I, char_budget: usize) -> String
where
    I: IntoIterator<Item = &'a Chunk>,
{
    let mut used = 0;
    let mut section = String::new();
    for chunk in chunks {
        let e = entry(chunk);
        let n = e.chars().count();
        if used + n > char_budget {
            break;
        }
        used += n;
        section.push_str(&e);
    }
    if section.is_empty() {
        return base.to_string();
    }
    format!("{base}{CONTEXT_HEADER}{section}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RagConfig {
    pub enabled: bool,
    pub top_k: usize,
    pub char_budget: usize,
    /// Leading characters of each parent kernel included in the query.
    pub query_source_chars: usize,
    /// Search the document index.
    pub use_documents: bool,
    /// Search the code examples of the sampled thoughts.
    pub use_code_examples: bool,
}

impl Default for RagConfig {
    fn default() -> Self {
        RagConfig {
            enabled: true,
            top_k: 4,
            char_budget: 6000,
            query_source_chars: 2000,
            use_documents: true,
            use_code_examples: true,
        }
    }
}

/// Strategy instruction, parent descriptions, then the head of each parent's source.
pub fn build_query(strategy: &str, parents: &[(&str, &str)], source_chars: usize) -> String {
    let mut q = strategy.to_string();
    for (description, _) in parents {
        q.push('\n');
        q.push_str(description);
    }
    for (_, source) in parents {
        q.push('\n');
        q.extend(source.chars().take(source_chars));
    }
    q
}
