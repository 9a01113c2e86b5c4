//! Completion backends: a remote chat-completion endpoint and a fixture
//! replay mock. The rule-based mock lives in [`super::synthetic`].

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::jsonl;

use super::{prompt_digest, PromptRequest, RawResponse};

/// Something that turns a prompt into model text.
pub trait Backend: Send + Sync {
    /// Stable identifier mixed into cache keys.
    fn id(&self) -> &str;
    fn model(&self) -> &str;
    fn complete(&self, req: &PromptRequest) -> Result<RawResponse>;
}

/// One replay fixture: the response recorded for a prompt digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub digest: String,
    pub raw_text: String,
    #[serde(default)]
    pub token_logprobs: Vec<f64>,
}

/// Serves recorded responses keyed by [`prompt_digest`].
pub struct ReplayBackend {
    fixtures: HashMap<String, RawResponse>,
}

impl ReplayBackend {
    pub fn new(fixtures: impl IntoIterator<Item = Fixture>) -> Self {
        let fixtures = fixtures
            .into_iter()
            .map(|f| {
                (
                    f.digest,
                    RawResponse {
                        raw_text: f.raw_text,
                        token_logprobs: f.token_logprobs,
                    },
                )
            })
            .collect();
        ReplayBackend { fixtures }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(jsonl::read::<Fixture>(path)?))
    }
}

impl Backend for ReplayBackend {
    fn id(&self) -> &str {
        "replay"
    }

    fn model(&self) -> &str {
        "fixtures"
    }

    fn complete(&self, req: &PromptRequest) -> Result<RawResponse> {
        let digest = prompt_digest(req);
        self.fixtures.get(&digest).cloned().ok_or(Error::FixtureMiss(digest))
    }
}

/// Wraps a backend and remembers every response as a replay fixture.
pub struct RecordingBackend<B> {
    inner: B,
    recorded: Mutex<HashMap<String, RawResponse>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            recorded: Mutex::new(HashMap::new()),
        }
    }

    /// Fixtures sorted by digest.
    pub fn fixtures(&self) -> Vec<Fixture> {
        let mut out: Vec<Fixture> = self
            .recorded
            .lock()
            .expect("recorder poisoned")
            .iter()
            .map(|(d, r)| Fixture {
                digest: d.clone(),
                raw_text: r.raw_text.clone(),
                token_logprobs: r.token_logprobs.clone(),
            })
            .collect();
        out.sort_by(|a, b| a.digest.cmp(&b.digest));
        out
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn model(&self) -> &str {
        self.inner.model()
    }

    fn complete(&self, req: &PromptRequest) -> Result<RawResponse> {
        let resp = self.inner.complete(req)?;
        self.recorded
            .lock()
            .expect("recorder poisoned")
            .insert(prompt_digest(req), resp.clone());
        Ok(resp)
    }
}

/// Waits between attempts; the number of retries is `delays.len()`.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub delays: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            delays: [1, 4, 16].map(Duration::from_secs).to_vec(),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy { delays: Vec::new() }
    }

    /// Runs `op` until it succeeds or the retries are used up, sleeping via
    /// `sleep` between attempts. Returns the last error.
    pub fn run<T, E>(
        &self,
        mut sleep: impl FnMut(Duration),
        mut op: impl FnMut(usize) -> std::result::Result<T, E>,
    ) -> std::result::Result<T, E> {
        let mut attempt = 0;
        loop {
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if attempt >= self.delays.len() => return Err(e),
                Err(_) => {
                    sleep(self.delays[attempt]);
                    attempt += 1;
                }
            }
        }
    }
}

/// OpenAI-style `/chat/completions` client.
pub struct RemoteBackend {
    base_url: String,
    model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        RemoteBackend {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            retry: RetryPolicy::default(),
            agent,
        }
    }

    /// Reads `LLM_API_BASE`, `LLM_MODEL` and `LLM_API_KEY`.
    pub fn from_env() -> Result<Self> {
        let base = std::env::var("LLM_API_BASE").map_err(|_| Error::Invalid("LLM_API_BASE is not set".into()))?;
        let model = std::env::var("LLM_MODEL").map_err(|_| Error::Invalid("LLM_MODEL is not set".into()))?;
        Ok(Self::new(base, model, std::env::var("LLM_API_KEY").ok()))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn request_body(&self, req: &PromptRequest) -> Value {
        let mut messages = Vec::new();
        if !req.system_text.is_empty() {
            messages.push(json!({"role": "system", "content": req.system_text}));
        }
        messages.push(json!({"role": "user", "content": req.user_text}));
        json!({
            "model": self.model,
            "messages": messages,
            "max_tokens": req.max_output_tokens,
            "temperature": req.temperature,
            "logprobs": true,
        })
    }

    fn attempt(&self, body: &Value) -> std::result::Result<RawResponse, String> {
        let url = format!("{}/chat/completions", self.base_url);
        let mut call = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call.send_json(body).map_err(|e| e.to_string())?;
        let value: Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        parse_chat_response(&value)
    }
}

/// Extracts text and per-token logprobs from a chat-completion response.
pub fn parse_chat_response(value: &Value) -> std::result::Result<RawResponse, String> {
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or("response has no choices")?;
    let raw_text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or("response has no message content")?
        .to_string();
    let token_logprobs = choice
        .pointer("/logprobs/content")
        .and_then(Value::as_array)
        .map(|toks| {
            toks.iter()
                .filter_map(|t| t.get("logprob").and_then(Value::as_f64))
                .collect()
        })
        .unwrap_or_default();
    Ok(RawResponse {
        raw_text,
        token_logprobs,
    })
}

impl Backend for RemoteBackend {
    fn id(&self) -> &str {
        "remote"
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, req: &PromptRequest) -> Result<RawResponse> {
        let body = self.request_body(req);
        self.retry
            .run(thread::sleep, |_| self.attempt(&body))
            .map_err(|message| Error::Transport {
                stage: req.stage.to_string(),
                prompt_hash: prompt_digest(req),
                message,
            })
    }
}
