//! Chat-completion gateway: backends, response cache, fielded-output
//! parsing, token-likelihood confidence and the per-stage call ledger.

mod backend;
mod cache;
mod fielded;
mod ledger;
pub mod prompts;
mod synthetic;

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use backend::{parse_chat_response, Backend, Fixture, RecordingBackend, RemoteBackend, ReplayBackend, RetryPolicy};
pub use cache::{Lookup, ResponseCache};
pub use fielded::{parse_fielded_output, parse_yes_no, FieldSchema, FieldedResponse};
pub use ledger::{ledger_report, CallRecord, Ledger, StageCounts};
pub use synthetic::{SyntheticBackend, SCAN_TOKEN_LOGPROB};

/// Pipeline step that issued a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Summarize,
    Ideate,
    Paraphrase,
    JudgeFeature,
    Scan,
    VerifySupport,
    VerifyCoverage,
    JudgeEval,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Summarize,
        Stage::Ideate,
        Stage::Paraphrase,
        Stage::JudgeFeature,
        Stage::Scan,
        Stage::VerifySupport,
        Stage::VerifyCoverage,
        Stage::JudgeEval,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Summarize => "summarize",
            Stage::Ideate => "ideate",
            Stage::Paraphrase => "paraphrase",
            Stage::JudgeFeature => "judge_feature",
            Stage::Scan => "scan",
            Stage::VerifySupport => "verify_support",
            Stage::VerifyCoverage => "verify_coverage",
            Stage::JudgeEval => "judge_eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub stage: Stage,
    pub system_text: String,
    pub user_text: String,
    pub max_output_tokens: u32,
    pub temperature: f64,
}

impl PromptRequest {
    /// Greedy decoding with a 1024-token output cap.
    pub fn new(stage: Stage, system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        PromptRequest {
            stage,
            system_text: system_text.into(),
            user_text: user_text.into(),
            max_output_tokens: 1024,
            temperature: 0.0,
        }
    }

    pub fn with_max_tokens(mut self, n: u32) -> Self {
        self.max_output_tokens = n;
        self
    }
}

/// Model text plus per-token log-probabilities, exactly as a backend
/// produced it. This is also the cache file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    pub raw_text: String,
    #[serde(default)]
    pub token_logprobs: Vec<f64>,
}

impl RawResponse {
    /// Parses the text against `schema`, carrying the logprobs along.
    pub fn fielded(&self, schema: &FieldSchema) -> Result<FieldedResponse> {
        let mut r = parse_fielded_output(&self.raw_text, schema)?;
        r.token_logprobs = self.token_logprobs.clone();
        Ok(r)
    }
}

fn hex_sha256(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            h.update([0x1f]);
        }
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// Backend-independent digest of a prompt; replay fixtures are keyed by it.
pub fn prompt_digest(req: &PromptRequest) -> String {
    hex_sha256(&[
        req.stage.as_str().as_bytes(),
        req.system_text.as_bytes(),
        req.user_text.as_bytes(),
        &req.temperature.to_bits().to_be_bytes(),
        &req.max_output_tokens.to_be_bytes(),
    ])
}

/// Cache key: the prompt digest bound to a backend and model.
pub fn cache_key(backend_id: &str, model: &str, req: &PromptRequest) -> String {
    hex_sha256(&[backend_id.as_bytes(), model.as_bytes(), prompt_digest(req).as_bytes()])
}

/// Extraction confidence as the geometric-mean token likelihood,
/// `exp(mean(logprobs))`. Without logprobs, falls back to a model-reported
/// confidence value clamped to [0, 1], else 0.
pub fn confidence_from_logprobs(token_logprobs: &[f64], reported: Option<&str>) -> Result<f64> {
    if let Some(bad) = token_logprobs.iter().find(|l| l.is_nan() || **l > 0.0) {
        return Err(Error::Backend(format!("logprob {bad} is not <= 0")));
    }
    if token_logprobs.is_empty() {
        let value = reported
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .map_or(0.0, |v| v.clamp(0.0, 1.0));
        return Ok(value);
    }
    let mean = token_logprobs.iter().sum::<f64>() / token_logprobs.len() as f64;
    Ok(mean.exp())
}

/// The single entry point every stage uses to reach a model.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    cache: Option<ResponseCache>,
    /// One lock per cache key, so identical prompts issued concurrently
    /// reach the backend once.
    in_flight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    ledger: Ledger,
    warnings: Mutex<Vec<String>>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Gateway {
            backend,
            cache: None,
            in_flight: Mutex::new(HashMap::new()),
            ledger: Ledger::new(),
            warnings: Mutex::new(Vec::new()),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn backend(&self) -> &dyn Backend {
        self.backend.as_ref()
    }

    pub fn warn(&self, message: impl Into<String>) {
        let message = message.into();
        log::warn!("{message}");
        self.warnings.lock().expect("warnings poisoned").push(message);
    }

    /// Warnings so far, sorted.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = self.warnings.lock().expect("warnings poisoned").clone();
        w.sort();
        w
    }

    fn record(&self, req: &PromptRequest, resp: &RawResponse, cached: bool) {
        self.ledger.append(CallRecord {
            stage: req.stage,
            prompt_hash: prompt_digest(req),
            cached,
            input_chars: req.system_text.chars().count() + req.user_text.chars().count(),
            output_chars: resp.raw_text.chars().count(),
        });
    }

    /// Calls the backend directly, bypassing the cache.
    pub fn complete(&self, req: &PromptRequest) -> Result<RawResponse> {
        if req.user_text.trim().is_empty() {
            return Err(Error::Invalid(format!("{} prompt has empty user text", req.stage)));
        }
        let resp = self.backend.complete(req).map_err(|e| match e {
            e @ (Error::Transport { .. } | Error::FixtureMiss(_)) => e,
            other => Error::Transport {
                stage: req.stage.to_string(),
                prompt_hash: prompt_digest(req),
                message: other.to_string(),
            },
        })?;
        self.record(req, &resp, false);
        Ok(resp)
    }

    /// Serves from the cache when possible; otherwise calls the backend and
    /// stores the response. Corrupt entries are regenerated.
    pub fn cached_complete(&self, req: &PromptRequest) -> Result<RawResponse> {
        let Some(cache) = &self.cache else {
            return self.complete(req);
        };
        let key = cache_key(self.backend.id(), self.backend.model(), req);
        let slot = self
            .in_flight
            .lock()
            .expect("in-flight map poisoned")
            .entry(key.clone())
            .or_default()
            .clone();
        let _guard = slot.lock().expect("in-flight slot poisoned");
        match cache.get(&key) {
            Lookup::Hit(resp) => {
                self.record(req, &resp, true);
                return Ok(resp);
            }
            Lookup::Corrupt(why) => self.warn(format!("corrupt cache entry replaced: {why}")),
            Lookup::Miss => {}
        }
        let resp = self.complete(req)?;
        cache.put(&key, &resp)?;
        Ok(resp)
    }
}
