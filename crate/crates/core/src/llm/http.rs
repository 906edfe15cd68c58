//! OpenAI-compatible `/chat/completions` and `/embeddings` clients.

use std::time::Duration;

use serde_json::{json, Value};

use crate::error::{Error, Result};

use super::{ChatBackend, ChatRequest, ChatResponse, EmbedBackend};

struct Endpoint {
    base: String,
    api_key_env: String,
    agent: ureq::Agent,
}

impl Endpoint {
    fn new(base: &str, api_key_env: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Endpoint {
            base: base.trim_end_matches('/').to_string(),
            api_key_env: api_key_env.to_string(),
            agent,
        }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value> {
        let url = format!("{}/{path}", self.base);
        let mut req = self.agent.post(&url).header("Content-Type", "application/json");
        if let Ok(key) = std::env::var(&self.api_key_env) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send(body.to_string())
            .map_err(|e| Error::Transport(format!("POST {url}: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Transport(format!("reading {url}: {e}")))?;
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| Error::Protocol(format!("{url}: invalid JSON body: {e}"))),
            408 | 429 | 500..=599 => Err(Error::Transport(format!("{url}: HTTP {status}: {text}"))),
            _ => Err(Error::Protocol(format!("{url}: HTTP {status}: {text}"))),
        }
    }
}

pub struct HttpChat {
    endpoint: Endpoint,
    model: String,
}

impl HttpChat {
    pub fn new(base: &str, model: &str, api_key_env: &str, timeout: Duration) -> Self {
        HttpChat {
            endpoint: Endpoint::new(base, api_key_env, timeout),
            model: model.to_string(),
        }
    }
}

impl ChatBackend for HttpChat {
    fn id(&self) -> String {
        format!("http:{}", self.model)
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let v = self.endpoint.post("chat/completions", &body)?;
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| Error::Protocol("response lacks choices[0].message.content".into()))?
            .to_string();
        Ok(ChatResponse {
            text,
            prompt_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
            backend: self.id(),
        })
    }
}

pub struct HttpEmbed {
    endpoint: Endpoint,
    model: String,
    dim: usize,
}

impl HttpEmbed {
    pub fn new(base: &str, model: &str, api_key_env: &str, dim: usize, timeout: Duration) -> Self {
        HttpEmbed {
            endpoint: Endpoint::new(base, api_key_env, timeout),
            model: model.to_string(),
            dim,
        }
    }
}

impl EmbedBackend for HttpEmbed {
    fn id(&self) -> String {
        format!("http:{}", self.model)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let body = json!({"model": self.model, "input": texts});
        let v = self.endpoint.post("embeddings", &body)?;
        let data = v["data"]
            .as_array()
            .ok_or_else(|| Error::Protocol("response lacks `data` array".into()))?;
        let mut rows: Vec<(u64, Vec<f64>)> = data
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let index = item["index"].as_u64().unwrap_or(i as u64);
                let vector = item["embedding"]
                    .as_array()
                    .ok_or_else(|| Error::Protocol("embedding item lacks `embedding`".into()))?
                    .iter()
                    .map(|x| x.as_f64().ok_or_else(|| Error::Protocol("non-numeric embedding".into())))
                    .collect::<Result<Vec<f64>>>()?;
                Ok((index, vector))
            })
            .collect::<Result<_>>()?;
        rows.sort_by_key(|(i, _)| *i);
        Ok(rows.into_iter().map(|(_, v)| v).collect())
    }
}
