use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::prompt::{render_values, AnamnesisDoc, ChatMessage, Role};
use crate::concepts::RawAnnotation;
use crate::{Error, Result};

/// A chat-completion backend.
pub trait ChatClient: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmClientConfig {
    /// Full URL of an OpenAI-style `chat/completions` endpoint.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Extra attempts after a transport failure or a 429/5xx status.
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    /// Environment variable holding a bearer token, if the endpoint needs one.
    pub token_env: Option<String>,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080/v1/chat/completions".into(),
            model: "gemini-pro".into(),
            temperature: 0.1,
            max_tokens: 512,
            retries: 2,
            backoff_ms: 500,
            timeout_secs: 60,
            token_env: Some("VDX_LLM_TOKEN".into()),
        }
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    temperature: f64,
    max_tokens: u32,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: String,
}

/// Blocking HTTP client for OpenAI-compatible chat endpoints.
pub struct HttpChatClient {
    config: LlmClientConfig,
    token: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(config: LlmClientConfig) -> Result<Self> {
        if !(0.0..=2.0).contains(&config.temperature) {
            return Err(Error::Config(format!(
                "temperature {} outside [0, 2]",
                config.temperature
            )));
        }
        let token = config
            .token_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok());
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Self {
            config,
            token,
            http,
        })
    }

    fn attempt(&self, messages: &[ChatMessage]) -> std::result::Result<String, (bool, String)> {
        let body = CompletionRequest {
            model: &self.config.model,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            messages,
        };
        let mut req = self.http.post(&self.config.endpoint).json(&body);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| (true, e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let retry = status.as_u16() == 429 || status.is_server_error();
            let text = resp.text().unwrap_or_default();
            return Err((retry, format!("HTTP {status}: {}", text.trim())));
        }
        let parsed: CompletionResponse = resp.json().map_err(|e| (false, e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or((false, "response has no choices".into()))
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms << (attempt - 1)));
            }
            match self.attempt(messages) {
                Ok(text) => return Ok(text),
                Err((retry, msg)) => {
                    log::warn!("llm request attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                    if !retry {
                        break;
                    }
                }
            }
        }
        Err(Error::Transport(last))
    }
}

/// A scripted deviation of [`MockLlm`] from the gold answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    /// Answers `value` for `concept` on every attempt.
    WrongValue { concept: String, value: String },
    /// Omits `concept` from the first answer and answers correctly when asked
    /// to repair.
    DropOnce { concept: String },
    /// Omits `concept` on every attempt.
    DropAlways { concept: String },
    /// Every call fails at the transport level.
    Unreachable,
}

/// Deterministic stand-in for an LLM that answers with the gold annotation of
/// the document in the last user message, modified by scripted faults.
#[derive(Debug, Default)]
pub struct MockLlm {
    gold: HashMap<String, (String, RawAnnotation)>,
    faults: HashMap<String, Vec<Fault>>,
    calls: AtomicUsize,
}

impl MockLlm {
    /// Echoes the gold annotation of each document.
    pub fn echo_gold<'a>(corpus: impl IntoIterator<Item = (&'a AnamnesisDoc, &'a RawAnnotation)>) -> Self {
        let gold = corpus
            .into_iter()
            .map(|(doc, values)| {
                (
                    doc.text.trim().to_string(),
                    (doc.id.clone(), values.clone()),
                )
            })
            .collect();
        Self {
            gold,
            ..Self::default()
        }
    }

    pub fn with_fault(mut self, doc_id: &str, fault: Fault) -> Self {
        self.faults.entry(doc_id.to_string()).or_default().push(fault);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatClient for MockLlm {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let repair = messages.iter().any(|m| m.role == Role::Assistant);
        let doc_text = messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.trim_start_matches("Anamnesis:").trim())
            .ok_or_else(|| Error::Transport("mock: no user message".into()))?;
        let (id, gold) = self
            .gold
            .get(doc_text)
            .ok_or_else(|| Error::Transport("mock: unknown document".into()))?;
        let mut values = gold.clone();
        for fault in self.faults.get(id).into_iter().flatten() {
            match fault {
                Fault::WrongValue { concept, value } => {
                    values.set(concept, value);
                }
                Fault::DropOnce { concept } if !repair => {
                    values.0.remove(concept);
                }
                Fault::DropOnce { .. } => {}
                Fault::DropAlways { concept } => {
                    values.0.remove(concept);
                }
                Fault::Unreachable => return Err(Error::Transport("mock: unreachable".into())),
            }
        }
        Ok(render_values(&values))
    }
}
