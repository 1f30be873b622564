//! Remote decision backend: a chat-style HTTP completion client.
//!
//! One request per decision: POST `{model, reasoning_effort, messages}` to
//! the configured endpoint, with a bearer token read from an environment
//! variable (never from configuration files). Transport failures and
//! unusable replies are retried up to `max_retries` attempts; the caller
//! applies the scripted fallback when every attempt fails.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reasoning-effort parameter forwarded verbatim to the backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Effort {
    #[default]
    Medium,
    High,
}

impl std::str::FromStr for Effort {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "medium" => Ok(Effort::Medium),
            "high" => Ok(Effort::High),
            other => Err(Error::InvalidConfig(format!(
                "unknown reasoning effort {other:?} (expected medium or high)"
            ))),
        }
    }
}

/// Connection settings for the remote backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Full URL of the chat-completion endpoint.
    pub endpoint: String,
    /// Model identifier sent in the request body.
    pub model: String,
    /// Reasoning effort sent in the request body.
    pub effort: Effort,
    /// Per-request timeout in seconds.
    pub timeout_secs: u64,
    /// Total attempts before giving up on a decision.
    pub max_retries: u32,
    /// Delay before attempt `n+1`, scaled linearly (`backoff_ms * n`).
    pub backoff_ms: u64,
    /// Environment variable holding the bearer token; requests go out
    /// without an Authorization header when it is unset.
    pub api_key_env: String,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            model: "o4-mini".to_string(),
            effort: Effort::Medium,
            timeout_secs: 120,
            max_retries: 3,
            backoff_ms: 200,
            api_key_env: "OPENAI_API_KEY".to_string(),
        }
    }
}

impl RemoteConfig {
    fn validate(&self) -> Result<()> {
        if self.endpoint.is_empty() || self.model.is_empty() {
            return Err(Error::InvalidConfig(
                "remote backend requires an endpoint and a model".to_string(),
            ));
        }
        if self.max_retries == 0 {
            return Err(Error::InvalidConfig("max_retries must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// A successfully parsed reply.
#[derive(Debug, Clone)]
pub struct RemoteReply {
    pub order: u32,
    pub reason: String,
    /// Raw completion text, kept for transcripts.
    pub raw: String,
    /// Attempts consumed (1 = first try succeeded).
    pub attempts: u32,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    reasoning_effort: Effort,
    messages: [ChatMessage<'a>; 2],
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatContent,
}

#[derive(Deserialize)]
struct ChatContent {
    content: String,
}

/// Blocking HTTP client for one run; cheap to clone per episode thread.
#[derive(Debug, Clone)]
pub struct RemoteClient {
    http: reqwest::blocking::Client,
}

impl RemoteClient {
    pub fn new(cfg: &RemoteConfig) -> Result<Self> {
        cfg.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Backend(format!("building HTTP client: {e}")))?;
        Ok(Self { http })
    }

    /// Request one decision, retrying transport failures and unusable
    /// replies up to `cfg.max_retries` attempts.
    pub fn decide(&self, cfg: &RemoteConfig, system: &str, user: &str) -> Result<RemoteReply> {
        let body = ChatRequest {
            model: &cfg.model,
            reasoning_effort: cfg.effort,
            messages: [
                ChatMessage { role: "system", content: system },
                ChatMessage { role: "user", content: user },
            ],
        };
        let mut last_error = String::new();
        for attempt in 1..=cfg.max_retries {
            if attempt > 1 && cfg.backoff_ms > 0 {
                std::thread::sleep(Duration::from_millis(cfg.backoff_ms * (attempt - 1) as u64));
            }
            match self.attempt(cfg, &body) {
                Ok(raw) => match parse_decision(&raw) {
                    Some((order, reason)) => {
                        return Ok(RemoteReply { order, reason, raw, attempts: attempt })
                    }
                    None => last_error = format!("no usable order in reply {raw:?}"),
                },
                Err(e) => last_error = e,
            }
        }
        Err(Error::Backend(format!(
            "remote backend failed after {} attempts: {last_error}",
            cfg.max_retries
        )))
    }

    fn attempt(&self, cfg: &RemoteConfig, body: &ChatRequest) -> Result<String, String> {
        let mut request = self.http.post(&cfg.endpoint).json(body);
        if let Ok(key) = std::env::var(&cfg.api_key_env) {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| format!("request failed: {e}"))?;
        let status = response.status();
        let text = response.text().map_err(|e| format!("reading response body: {e}"))?;
        if !status.is_success() {
            return Err(format!("HTTP {status}: {}", truncate(&text, 200)));
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| format!("malformed response body: {e}"))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| "response carried no choices".to_string())
    }
}

fn truncate(s: &str, limit: usize) -> &str {
    match s.char_indices().nth(limit) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}

/// Extract `(order, reason)` from a completion.
///
/// First preference: a JSON object with an integer `order` field (searched
/// as the outermost `{...}` span, so code fences survive). Fallback salvage:
/// the last non-negative integer labeled "order" in free text; an explicit
/// minus sign disqualifies a match. Empty result means the reply is
/// unusable and the attempt failed.
pub fn parse_decision(raw: &str) -> Option<(u32, String)> {
    if let Some(parsed) = parse_json_reply(raw) {
        return Some(parsed);
    }
    salvage_order(raw).map(|order| (order, raw.trim().to_string()))
}

#[derive(Deserialize)]
struct JsonReply {
    order: i64,
    #[serde(default)]
    reason: Option<String>,
}

fn parse_json_reply(raw: &str) -> Option<(u32, String)> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    if end <= start {
        return None;
    }
    let reply: JsonReply = serde_json::from_str(&raw[start..=end]).ok()?;
    let order = u32::try_from(reply.order).ok()?;
    Some((order, reply.reason.unwrap_or_default()))
}

/// Last integer following a case-insensitive "order" label.
fn salvage_order(raw: &str) -> Option<u32> {
    let lower = raw.to_lowercase();
    let bytes = raw.as_bytes();
    let mut found = None;
    let mut search = 0;
    while let Some(pos) = lower[search..].find("order") {
        let after = search + pos + "order".len();
        search = after;
        if let Some(value) = first_integer(&bytes[after..]) {
            found = Some(value);
        }
    }
    found
}

/// First decimal run in `tail`, rejected when preceded by a minus sign.
fn first_integer(tail: &[u8]) -> Option<u32> {
    let start = tail.iter().position(|b| b.is_ascii_digit())?;
    if start > 0 && tail[start - 1] == b'-' {
        return None;
    }
    let end = tail[start..]
        .iter()
        .position(|b| !b.is_ascii_digit())
        .map_or(tail.len(), |len| start + len);
    std::str::from_utf8(&tail[start..end]).ok()?.parse().ok()
}
