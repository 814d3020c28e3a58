use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::retry::{self, Attempt, InFlight, RetryPolicy};
use crate::toolbox::Summarizer;

use super::{CompletionRequest, Message, Policy, PolicyError, Role, SamplingParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatPolicyConfig {
    /// Base URL; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    /// Appends one JSON record per request and response.
    pub trace_path: Option<PathBuf>,
}

impl Default for ChatPolicyConfig {
    fn default() -> Self {
        ChatPolicyConfig {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "default".into(),
            api_key_env: Some("TOOLREC_POLICY_TOKEN".into()),
            timeout_secs: 120,
            max_in_flight: 8,
            retry: RetryPolicy::default(),
            trace_path: None,
        }
    }
}

/// A chat-completions endpoint as a policy.
pub struct ChatPolicy {
    config: ChatPolicyConfig,
    client: reqwest::blocking::Client,
    gate: InFlight,
    trace: Option<Mutex<File>>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

fn wire_role(r: Role) -> &'static str {
    match r {
        Role::System => "system",
        Role::User | Role::Tool => "user",
        Role::Assistant => "assistant",
    }
}

fn looks_like_context_overflow(body: &str) -> bool {
    let b = body.to_ascii_lowercase();
    b.contains("context_length") || b.contains("context length") || b.contains("maximum context") || b.contains("too many tokens")
}

impl ChatPolicy {
    pub fn new(config: ChatPolicyConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let trace = match &config.trace_path {
            Some(p) => {
                if let Some(dir) = p.parent() {
                    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                }
                let f = OpenOptions::new().create(true).append(true).open(p).map_err(|e| Error::io(p, e))?;
                Some(Mutex::new(f))
            }
            None => None,
        };
        Ok(ChatPolicy {
            gate: InFlight::new(config.max_in_flight.max(1)),
            config,
            client,
            trace,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn log(&self, record: Value) {
        if let Some(f) = &self.trace {
            let mut f = f.lock().expect("trace lock poisoned");
            // Tracing is best effort; a full disk must not fail the episode.
            let _ = writeln!(f, "{record}");
        }
    }

    pub fn chat(&self, messages: &[Message], params: &SamplingParams, seed: Option<u64>) -> Result<String, PolicyError> {
        let url = self.endpoint();
        let body = json!({
            "model": self.config.model,
            "messages": messages
                .iter()
                .map(|m| json!({"role": wire_role(m.role), "content": m.content}))
                .collect::<Vec<_>>(),
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
            "seed": seed,
        });
        let token = self.config.api_key_env.as_deref().and_then(|k| std::env::var(k).ok());
        let outcome = retry::with_backoff(&self.config.retry, |_| {
            let _slot = self.gate.acquire();
            let mut req = self.client.post(&url).json(&body);
            if let Some(t) = &token {
                req = req.bearer_auth(t);
            }
            let resp = req.send().map_err(|e| Attempt::Retry(PolicyError::Unavailable(format!("{url}: {e}"))))?;
            let status = resp.status();
            let text = resp.text().unwrap_or_default();
            if status.is_server_error() || status.as_u16() == 429 {
                return Err(Attempt::Retry(PolicyError::Unavailable(format!("{url}: HTTP {status}"))));
            }
            if !status.is_success() {
                let err = if looks_like_context_overflow(&text) {
                    PolicyError::ContextLength(format!("{url}: {text}"))
                } else {
                    PolicyError::Other(format!("{url}: HTTP {status}: {text}"))
                };
                return Err(Attempt::Fatal(err));
            }
            let parsed: ChatResponse = serde_json::from_str(&text)
                .map_err(|e| Attempt::Fatal(PolicyError::Other(format!("{url}: bad response body: {e}"))))?;
            parsed
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
                .ok_or_else(|| Attempt::Fatal(PolicyError::Other(format!("{url}: response has no message content"))))
        });
        match &outcome {
            Ok(text) => self.log(json!({"request": body, "response": text})),
            Err((e, attempts)) => self.log(json!({"request": body, "error": e.to_string(), "attempts": attempts})),
        }
        outcome.map_err(|(e, attempts)| match e {
            PolicyError::Unavailable(why) => PolicyError::Unavailable(format!("{why} (after {attempts} attempts)")),
            other => other,
        })
    }
}

impl Policy for ChatPolicy {
    fn name(&self) -> String {
        format!("chat:{}", self.config.model)
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, PolicyError> {
        self.chat(req.messages, &req.params, Some(req.seed))
    }
}

impl Summarizer for ChatPolicy {
    fn summarize(&self, prompt: &str) -> Result<String> {
        let messages = [Message::new(Role::User, prompt)];
        self.chat(&messages, &SamplingParams::default(), Some(0))
            .map_err(|e| Error::Transport(e.to_string()))
    }
}
