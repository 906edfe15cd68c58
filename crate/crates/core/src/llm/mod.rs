//! Chat and embedding access behind a single [`Gateway`].
//!
//! The gateway owns retries, replay logging and embedding normalization. The
//! backends behind it are pluggable: an OpenAI-compatible HTTP client, a
//! scripted mock, a replay reader, and a token-hashing embedder.

mod embed;
mod extract;
mod http;
mod mock;
mod replay;
pub mod template;

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

pub use embed::{normalize, HashEmbedder};
pub use extract::{extract_boxed_description, extract_code};
pub use http::{HttpChat, HttpEmbed};
pub use mock::{KernelImprover, MockChat, MockRule, MockScript};
pub use replay::{ReplayChat, ReplayEntry, ReplayLog};
pub use template::{render_prompt, PromptTemplate, RenderedPrompt, TemplateId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    /// Purpose of the call, e.g. `seed_init` or `eoh:e1`.
    pub tag: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Set on a second attempt after the first reply was unusable.
    #[serde(default)]
    pub reprompt: bool,
}

impl ChatRequest {
    pub fn new(tag: impl Into<String>, prompt: RenderedPrompt) -> Self {
        ChatRequest {
            tag: tag.into(),
            system: prompt.system,
            user: prompt.user,
            temperature: 0.7,
            max_tokens: 4096,
            reprompt: false,
        }
    }

    pub fn with_sampling(mut self, temperature: f64, max_tokens: u32) -> Self {
        self.temperature = temperature;
        self.max_tokens = max_tokens;
        self
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("chat request serializes");
        util::sha256_hex(bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub backend: String,
}

pub trait ChatBackend: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse>;
}

pub trait EmbedBackend: Send + Sync {
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            base_delay_ms: 0,
            max_delay_ms: 0,
        }
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }

    fn run<T>(&self, mut op: impl FnMut() -> Result<T>) -> Result<T> {
        let mut attempt = 0;
        loop {
            match op() {
                Err(e) if e.is_transient() && attempt < self.max_retries => {
                    tracing::warn!(attempt, error = %e, "retrying backend call");
                    std::thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
                Err(Error::Transport(msg)) if attempt > 0 => {
                    return Err(Error::Transport(format!(
                        "{msg} (after {} attempts)",
                        attempt + 1
                    )))
                }
                other => return other,
            }
        }
    }
}

/// Timestamps written into replay entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    /// Seconds since the epoch.
    System,
    /// Entry sequence number; keeps mock runs byte-reproducible.
    Logical,
}

#[derive(Clone)]
pub struct Gateway {
    chat: Arc<dyn ChatBackend>,
    embedder: Arc<dyn EmbedBackend>,
    retry: RetryPolicy,
    log: Arc<Mutex<ReplayLog>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("chat", &self.chat.id())
            .field("embed", &self.embedder.id())
            .field("retry", &self.retry)
            .finish()
    }
}

impl Gateway {
    pub fn new(
        chat: Arc<dyn ChatBackend>,
        embedder: Arc<dyn EmbedBackend>,
        retry: RetryPolicy,
        clock: Clock,
    ) -> Self {
        Gateway {
            chat,
            embedder,
            retry,
            log: Arc::new(Mutex::new(ReplayLog::new(clock))),
        }
    }

    /// Same backends, fresh replay log. Used to give each search its own log.
    pub fn session(&self) -> Gateway {
        let clock = self.log.lock().expect("replay log poisoned").clock();
        Gateway {
            chat: Arc::clone(&self.chat),
            embedder: Arc::clone(&self.embedder),
            retry: self.retry,
            log: Arc::new(Mutex::new(ReplayLog::new(clock))),
        }
    }

    pub fn chat(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let response = self.retry.run(|| self.chat.complete(request))?;
        self.log
            .lock()
            .expect("replay log poisoned")
            .record(request.clone(), response.clone());
        if response.text.trim().is_empty() {
            return Err(Error::Protocol(format!(
                "empty response from {} for `{}`",
                response.backend, request.tag
            )));
        }
        Ok(response)
    }

    /// Embeds `texts`, checking the backend dimension and unit-normalizing each vector.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let dim = self.embedder.dim();
        let raw = self.retry.run(|| self.embedder.embed(texts))?;
        if raw.len() != texts.len() {
            return Err(Error::Protocol(format!(
                "embedding backend returned {} vectors for {} texts",
                raw.len(),
                texts.len()
            )));
        }
        raw.into_iter()
            .map(|v| {
                if v.len() != dim {
                    return Err(Error::Invariant(format!(
                        "embedding dimension {} differs from backend dimension {dim}",
                        v.len()
                    )));
                }
                Ok(normalize(v))
            })
            .collect()
    }

    pub fn embed_one(&self, text: &str) -> Result<Vec<f64>> {
        let mut out = self.embed(std::slice::from_ref(&text.to_string()))?;
        Ok(out.pop().expect("one vector per text"))
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedder.dim()
    }

    pub fn embedder_id(&self) -> String {
        self.embedder.id()
    }

    pub fn replay_entries(&self) -> Vec<ReplayEntry> {
        self.log.lock().expect("replay log poisoned").entries().to_vec()
    }

    pub fn write_replay_log(&self, path: &Path) -> Result<()> {
        self.log.lock().expect("replay log poisoned").write_jsonl(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatKind {
    Mock,
    Http,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedKind {
    Hash,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatConfig {
    pub kind: ChatKind,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_s: u64,
    /// Mock rule table (JSON, see [`MockScript`]).
    pub script: Option<PathBuf>,
    /// Prior replay log served back verbatim.
    pub replay_log: Option<PathBuf>,
}

impl Default for ChatConfig {
    fn default() -> Self {
        ChatConfig {
            kind: ChatKind::Mock,
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_s: 300,
            script: None,
            replay_log: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub kind: EmbedKind,
    pub dim: usize,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_s: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            kind: EmbedKind::Hash,
            dim: 256,
            endpoint: "https://api.openai.com/v1".into(),
            model: "text-embedding-3-small".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_s: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub chat: ChatConfig,
    pub embed: EmbedConfig,
    pub retry: RetryPolicy,
}

impl LlmConfig {
    pub fn build(&self) -> Result<Gateway> {
        let chat: Arc<dyn ChatBackend> = match self.chat.kind {
            ChatKind::Mock => match &self.chat.script {
                Some(path) => Arc::new(MockChat::from_script(&MockScript::load(path)?)?),
                None => Arc::new(MockChat::new()),
            },
            ChatKind::Http => Arc::new(HttpChat::new(
                &self.chat.endpoint,
                &self.chat.model,
                &self.chat.api_key_env,
                Duration::from_secs(self.chat.timeout_s),
            )),
            ChatKind::Replay => {
                let path = self.chat.replay_log.as_ref().ok_or_else(|| {
                    Error::Config("llm.chat.replay_log is required for replay mode".into())
                })?;
                Arc::new(ReplayChat::load(path)?)
            }
        };
        let embedder: Arc<dyn EmbedBackend> = match self.embed.kind {
            EmbedKind::Hash => Arc::new(HashEmbedder::new(self.embed.dim)?),
            EmbedKind::Http => Arc::new(HttpEmbed::new(
                &self.embed.endpoint,
                &self.embed.model,
                &self.embed.api_key_env,
                self.embed.dim,
                Duration::from_secs(self.embed.timeout_s),
            )),
        };
        let clock = match self.chat.kind {
            ChatKind::Http => Clock::System,
            ChatKind::Mock | ChatKind::Replay => Clock::Logical,
        };
        Ok(Gateway::new(chat, embedder, self.retry, clock))
    }
}
