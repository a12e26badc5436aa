//! Chat-completion backends.
//!
//! [`HttpBackend`] speaks the OpenAI-compatible chat-completions protocol.
//! The remaining backends are deterministic and offline: scripted replies,
//! closures, and replay of a known grouping.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agents::{AgentFunction, PromptBundle, UntanglingResult};
use crate::diff_model::StmtId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub model: String,
    pub max_context: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub latency_ms: u64,
    pub attempts: u32,
    /// Delay slept before each retry.
    pub backoff_ms: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
}

impl Completion {
    fn offline(text: String) -> Self {
        Self {
            text,
            usage: Usage {
                attempts: 1,
                ..Usage::default()
            },
        }
    }
}

/// A chat model. Implementations must accept concurrent calls.
pub trait Backend: Send + Sync {
    fn info(&self) -> BackendInfo;
    fn complete(&self, bundle: &PromptBundle) -> Result<Completion>;
}

// ---------------------------------------------------------------------------
// HTTP

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub timeout_secs: f64,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub max_in_flight: usize,
    pub max_context: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            temperature: 0.0,
            timeout_secs: 120.0,
            max_attempts: 4,
            backoff_base_ms: 1000,
            backoff_max_ms: 30_000,
            max_in_flight: 4,
            max_context: 128_000,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::Config(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(Error::Config("timeout_secs must be positive".into()));
        }
        if self.endpoint.is_empty() || self.model.is_empty() {
            return Err(Error::Config("endpoint and model are required".into()));
        }
        Ok(())
    }

    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor).min(self.backoff_max_ms))
    }
}

struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(cap: usize) -> Self {
        Self {
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            cap,
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.cap {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpBackend {
    cfg: LlmConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    gate: Gate,
}

enum Failure {
    Retry(String),
    Fatal(Error),
}

fn snippet(text: &str) -> String {
    let mut s: String = text.chars().take(200).collect();
    if s.len() < text.len() {
        s.push_str("...");
    }
    s
}

impl HttpBackend {
    /// Validates `cfg` and resolves the API key from the environment.
    pub fn new(cfg: LlmConfig) -> Result<Self> {
        cfg.validate()?;
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("environment variable {var} with the API key is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = Gate::new(cfg.max_in_flight);
        Ok(Self {
            cfg,
            api_key,
            agent,
            gate,
        })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.cfg
    }

    fn attempt(&self, body: &str) -> std::result::Result<(String, Option<u64>, Option<u64>), Failure> {
        let mut req = self.agent.post(&self.cfg.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| match e {
            ureq::Error::BadUri(_)
            | ureq::Error::Http(_)
            | ureq::Error::InvalidProxyUrl
            | ureq::Error::RequireHttpsOnly(_)
            | ureq::Error::TlsRequired => Failure::Fatal(Error::Config(e.to_string())),
            other => Failure::Retry(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retry(format!("reading response body: {e}")))?;
        match status {
            200..=299 => {}
            429 | 500..=599 => return Err(Failure::Retry(format!("HTTP {status}: {}", snippet(&text)))),
            _ => return Err(Failure::Fatal(Error::Config(format!("HTTP {status}: {}", snippet(&text))))),
        }
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Fatal(Error::protocol(format!("response is not JSON: {e}"), text.clone())))?;
        let content = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| Failure::Fatal(Error::protocol("response has no choices[0].message.content", text.clone())))?;
        Ok((
            content.to_string(),
            v["usage"]["prompt_tokens"].as_u64(),
            v["usage"]["completion_tokens"].as_u64(),
        ))
    }
}

impl Backend for HttpBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            model: self.cfg.model.clone(),
            max_context: self.cfg.max_context,
        }
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<Completion> {
        let _permit = self.gate.acquire();
        let body = json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": [
                {"role": "system", "content": bundle.system},
                {"role": "user", "content": bundle.user},
            ],
        })
        .to_string();
        let started = Instant::now();
        let mut backoff_ms = Vec::new();
        let mut last = String::new();
        for attempt in 1..=self.cfg.max_attempts {
            match self.attempt(&body) {
                Ok((text, prompt_tokens, completion_tokens)) => {
                    return Ok(Completion {
                        text,
                        usage: Usage {
                            prompt_tokens,
                            completion_tokens,
                            latency_ms: started.elapsed().as_millis() as u64,
                            attempts: attempt,
                            backoff_ms,
                        },
                    })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(msg)) => {
                    tracing::warn!(attempt, error = %msg, "chat completion failed");
                    last = msg;
                }
            }
            if attempt < self.cfg.max_attempts {
                let delay = self.cfg.backoff(attempt);
                backoff_ms.push(delay.as_millis() as u64);
                std::thread::sleep(delay);
            }
        }
        Err(Error::Transport {
            attempts: self.cfg.max_attempts,
            message: last,
        })
    }
}

// ---------------------------------------------------------------------------
// Offline backends

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptStep {
    Reply(String),
    Fail(String),
}

enum Script {
    Ordered(VecDeque<ScriptStep>),
    Keyed(BTreeMap<String, ScriptStep>),
}

/// Replays canned replies, in order or keyed by [`PromptBundle::hash`].
pub struct ScriptedBackend {
    script: Mutex<Script>,
    calls: Mutex<Vec<PromptBundle>>,
}

impl ScriptedBackend {
    pub fn ordered<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Result<Self> {
        Self::steps(replies.into_iter().map(|r| ScriptStep::Reply(r.into())))
    }

    pub fn steps(steps: impl IntoIterator<Item = ScriptStep>) -> Result<Self> {
        let steps: VecDeque<_> = steps.into_iter().collect();
        if steps.is_empty() {
            return Err(Error::Scripted("script is empty".into()));
        }
        Ok(Self::with(Script::Ordered(steps)))
    }

    pub fn keyed(replies: BTreeMap<String, String>) -> Result<Self> {
        if replies.is_empty() {
            return Err(Error::Scripted("script is empty".into()));
        }
        Ok(Self::with(Script::Keyed(
            replies.into_iter().map(|(k, v)| (k, ScriptStep::Reply(v))).collect(),
        )))
    }

    fn with(script: Script) -> Self {
        Self {
            script: Mutex::new(script),
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Every bundle received so far, in arrival order.
    pub fn calls(&self) -> Vec<PromptBundle> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn remaining(&self) -> usize {
        match &*self.script.lock().unwrap_or_else(|e| e.into_inner()) {
            Script::Ordered(q) => q.len(),
            Script::Keyed(m) => m.len(),
        }
    }
}

impl Backend for ScriptedBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            model: "scripted".into(),
            max_context: usize::MAX,
        }
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<Completion> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).push(bundle.clone());
        let step = match &mut *self.script.lock().unwrap_or_else(|e| e.into_inner()) {
            Script::Ordered(q) => q
                .pop_front()
                .ok_or_else(|| Error::Scripted(format!("script exhausted at {} {}", bundle.role.as_str(), bundle.function.as_str())))?,
            Script::Keyed(m) => {
                let key = bundle.hash();
                m.get(&key)
                    .cloned()
                    .ok_or_else(|| Error::Scripted(format!("no scripted reply for prompt {key}")))?
            }
        };
        match step {
            ScriptStep::Reply(text) => Ok(Completion::offline(text)),
            ScriptStep::Fail(message) => Err(Error::Transport { attempts: 1, message }),
        }
    }
}

type ReplyFn = dyn Fn(&PromptBundle) -> Result<String> + Send + Sync;

/// Backend computing each reply with a closure.
pub struct FnBackend {
    name: String,
    reply: Box<ReplyFn>,
}

impl FnBackend {
    pub fn new(name: impl Into<String>, reply: impl Fn(&PromptBundle) -> Result<String> + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            reply: Box::new(reply),
        }
    }
}

impl Backend for FnBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            model: self.name.clone(),
            max_context: usize::MAX,
        }
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<Completion> {
        (self.reply)(bundle).map(Completion::offline)
    }
}

/// Backend whose agents all propose `grouping` and always agree.
pub fn replay_backend(name: &str, grouping: UntanglingResult) -> FnBackend {
    let reply = grouping.to_reply_json().to_string();
    FnBackend::new(name, move |bundle| {
        Ok(if bundle.function == AgentFunction::Validate {
            json!({"agree": true, "rationale": "matches my grouping"}).to_string()
        } else {
            reply.clone()
        })
    })
}

/// Replays the gold partition of a commit.
pub fn gold_backend(gold: &BTreeMap<StmtId, u32>) -> FnBackend {
    let mut by_concern: BTreeMap<u32, Vec<StmtId>> = BTreeMap::new();
    for (&s, &c) in gold {
        by_concern.entry(c).or_default().push(s);
    }
    let grouping = UntanglingResult::from_groups(crate::agents::Role::Reviewer, by_concern.into_values());
    replay_backend("gold-replay", grouping)
}

/// Puts every statement of `universe` into one concern.
pub fn single_cluster_backend(universe: &BTreeSet<StmtId>) -> FnBackend {
    replay_backend(
        "single-cluster",
        UntanglingResult::single_cluster(crate::agents::Role::Reviewer, universe),
    )
}
