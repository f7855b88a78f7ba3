//! Model providers: an OpenAI-compatible HTTP client and a deterministic mock.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::records::{stable_id, TaskKind};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProviderError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response: {0}")]
    BadResponse(String),
    #[error("{0}")]
    Injected(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// What the harness is asking for. Only `model`, `messages` and
/// `temperature` go over the wire; `task` and `items` let the mock answer in
/// the expected shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub task: TaskKind,
    /// Number of judged items for judge tasks.
    pub items: usize,
}

impl ChatRequest {
    pub fn user(model: &str, prompt: &str, temperature: f64, task: TaskKind) -> Self {
        Self {
            model: model.to_string(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt.to_string(),
            }],
            temperature,
            task,
            items: 0,
        }
    }

    pub fn prompt(&self) -> &str {
        self.messages
            .last()
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }

    pub fn wire_body(&self) -> serde_json::Value {
        json!({
            "model": self.model,
            "messages": self.messages,
            "temperature": self.temperature,
        })
    }
}

pub trait Provider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

/// Chat-completion client for `POST {base_url}/chat/completions`.
pub struct OpenAiProvider {
    base_url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl OpenAiProvider {
    pub const DEFAULT_BASE_URL: &'static str = "https://api.openai.com/v1";

    pub fn new(
        base_url: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            client,
        })
    }

    /// Reads the key from the named environment variable, if set.
    pub fn from_env(
        base_url: impl Into<String>,
        key_var: &str,
        timeout: Duration,
    ) -> Result<Self, ProviderError> {
        Self::new(base_url, std::env::var(key_var).ok(), timeout)
    }
}

impl Provider for OpenAiProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .json(&request.wire_body());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .text()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let value: serde_json::Value =
            serde_json::from_str(&body).map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| {
                ProviderError::BadResponse(format!("no choices[0].message.content in {body}"))
            })
    }
}

/// Deterministic offline provider.
///
/// Answers are a function of (seed, model, prompt) only, so repeated runs
/// are identical regardless of scheduling. Scripted replies take precedence:
/// the first rule whose needle occurs in the prompt wins.
pub struct MockProvider {
    seed: u64,
    script: Vec<(String, String)>,
    fail_first: usize,
    always_fail: bool,
    delay: Duration,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    log: Mutex<Vec<ChatRequest>>,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            script: Vec::new(),
            fail_first: 0,
            always_fail: false,
            delay: Duration::ZERO,
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn with_reply(mut self, needle: impl Into<String>, reply: impl Into<String>) -> Self {
        self.script.push((needle.into(), reply.into()));
        self
    }

    /// Fail the first `n` calls overall.
    pub fn failing_first(mut self, n: usize) -> Self {
        self.fail_first = n;
        self
    }

    pub fn always_failing(mut self) -> Self {
        self.always_fail = true;
        self
    }

    /// Sleep per call, for concurrency instrumentation.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().expect("mock log poisoned").clone()
    }

    fn default_reply(&self, request: &ChatRequest) -> String {
        let id = stable_id(&[&self.seed.to_string(), &request.model, request.prompt()]);
        let h = u64::from_str_radix(&id[..16], 16).expect("hex id");
        let token = quoted(request.prompt()).unwrap_or_default();
        match request.task {
            TaskKind::SentenceLong => match h % 4 {
                0 => format!("我们今天学习了新的词汇。（{}）", &id[..6]),
                _ => format!("我在新闻里看到了{token}的消息。"),
            },
            TaskKind::SentenceSplit => {
                let segments = request
                    .prompt()
                    .split_once('：')
                    .and_then(|(_, rest)| rest.split_once('。'))
                    .map(|(list, _)| list.replace("; ", ""))
                    .unwrap_or_default();
                format!("他说{segments}。")
            }
            TaskKind::Translate => format!("Translation #{} of {token}", h % 3),
            TaskKind::Explain => format!("Meaning #{} of {token}", h % 3),
            TaskKind::JudgeRank => {
                let mut order: Vec<usize> = (1..=request.items.max(1)).collect();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(h));
                order
                    .iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            }
            TaskKind::JudgeConsistency => {
                format!("accurate={}, consistent={}", h & 1, (h >> 1) & 1)
            }
        }
    }
}

/// Text between the first pair of “” or "" quotes.
fn quoted(prompt: &str) -> Option<String> {
    for (open, close) in [('“', '”'), ('"', '"')] {
        if let Some(start) = prompt.find(open) {
            let rest = &prompt[start + open.len_utf8()..];
            if let Some(end) = rest.find(close) {
                return Some(rest[..end].to_string());
            }
        }
    }
    None
}

impl Provider for MockProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        self.log
            .lock()
            .expect("mock log poisoned")
            .push(request.clone());
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let result = if self.always_fail || call < self.fail_first {
            Err(ProviderError::Injected(format!(
                "mock failure on call {call}"
            )))
        } else {
            Ok(self
                .script
                .iter()
                .find(|(needle, _)| request.prompt().contains(needle.as_str()))
                .map(|(_, reply)| reply.clone())
                .unwrap_or_else(|| self.default_reply(request)))
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_is_deterministic() {
        let a = MockProvider::new(7);
        let b = MockProvider::new(7);
        let req = ChatRequest::user("m", "请使用词语“北京赛车”造句", 0.0, TaskKind::SentenceLong);
        assert_eq!(a.complete(&req).unwrap(), b.complete(&req).unwrap());
        assert_eq!(a.calls(), 1);
    }

    #[test]
    fn scripted_reply_wins() {
        let m = MockProvider::new(0).with_reply("rank", "2,1,4,3");
        let mut req = ChatRequest::user("judge", "please rank these", 0.0, TaskKind::JudgeRank);
        req.items = 4;
        assert_eq!(m.complete(&req).unwrap(), "2,1,4,3");
    }

    #[test]
    fn mock_rank_reply_is_a_permutation() {
        let m = MockProvider::new(3);
        let mut req = ChatRequest::user("judge", "x", 0.0, TaskKind::JudgeRank);
        req.items = 4;
        let reply = m.complete(&req).unwrap();
        assert!(
            super::super::prompts::parse_ranking(&reply, 4).is_ok(),
            "{reply}"
        );
    }

    #[test]
    fn failure_injection() {
        let m = MockProvider::new(0).failing_first(2);
        let req = ChatRequest::user("m", "p", 0.0, TaskKind::Translate);
        assert!(m.complete(&req).is_err());
        assert!(m.complete(&req).is_err());
        assert!(m.complete(&req).is_ok());
    }

    #[test]
    fn wire_body_has_only_protocol_fields() {
        let req = ChatRequest::user("gpt-4o", "hi", 0.0, TaskKind::Explain);
        let body = req.wire_body();
        assert_eq!(body["model"], "gpt-4o");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body.as_object().unwrap().len(), 3);
    }
}
