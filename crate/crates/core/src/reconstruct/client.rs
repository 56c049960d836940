use std::thread;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub const ENV_URL: &str = "ANCHORLAB_LLM_URL";
pub const ENV_KEY: &str = "ANCHORLAB_LLM_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub repetition_penalty: f64,
    pub max_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.7,
            top_p: 0.9,
            repetition_penalty: 1.2,
            max_tokens: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Full chat-completions URL.
    pub url: String,
    pub model: String,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
    /// Concurrent requests during batch reconstruction.
    pub concurrency: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            url: String::new(),
            model: "llama-2-7b-chat".into(),
            retries: 3,
            backoff_ms: 500,
            timeout_s: 60,
            concurrency: 1,
        }
    }
}

/// Blocking OpenAI-compatible chat-completion client.
pub struct ChatClient {
    config: EndpointConfig,
    key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Debug, Clone)]
pub struct Completion {
    pub content: String,
    pub raw: String,
}

impl ChatClient {
    pub fn new(config: EndpointConfig, key: Option<String>) -> Result<Self> {
        if config.url.is_empty() {
            return Err(Error::Config(format!("no endpoint URL (set {ENV_URL} or endpoint.url)")));
        }
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_s.max(1))))
            .build()
            .into();
        Ok(ChatClient { config, key, agent })
    }

    /// URL and key from the environment override `config`.
    pub fn from_env(mut config: EndpointConfig) -> Result<Self> {
        if let Ok(url) = std::env::var(ENV_URL) {
            config.url = url;
        }
        let key = std::env::var(ENV_KEY).ok().filter(|k| !k.is_empty());
        Self::new(config, key)
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn request_body(&self, prompt: &str, params: &GenerationParams, with_penalty: bool) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        });
        if with_penalty {
            body["repetition_penalty"] = json!(params.repetition_penalty);
        }
        body
    }

    fn post(&self, body: &Value) -> std::result::Result<(u16, String), String> {
        let mut req = self.agent.post(&self.config.url);
        if let Some(key) = &self.key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok((status, text))
    }

    /// Sends one prompt. Transport errors, 429 and 5xx are retried with
    /// exponential backoff; a 400 that may stem from the unsupported
    /// `repetition_penalty` field is retried once without it.
    pub fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Completion> {
        let mut with_penalty = true;
        let mut last_status = None;
        let mut last_message = String::new();
        let mut attempt = 0;
        while attempt <= self.config.retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(self.config.backoff_ms << (attempt - 1).min(10)));
            }
            attempt += 1;
            let body = self.request_body(prompt, params, with_penalty);
            match self.post(&body) {
                Ok((200..=299, raw)) => {
                    let content = parse_content(&raw)?;
                    return Ok(Completion { content, raw });
                }
                Ok((400, raw)) if with_penalty => {
                    warn!("endpoint rejected the request; retrying without repetition_penalty");
                    with_penalty = false;
                    last_status = Some(400);
                    last_message = raw;
                    attempt -= 1;
                }
                Ok((status, raw)) => {
                    last_status = Some(status);
                    last_message = raw;
                    if status != 429 && status < 500 {
                        break;
                    }
                }
                Err(e) => {
                    last_status = None;
                    last_message = e;
                }
            }
        }
        Err(Error::Endpoint {
            status: last_status,
            message: truncate(&last_message, 300),
        })
    }
}

fn truncate(s: &str, n: usize) -> String {
    match s.char_indices().nth(n) {
        Some((i, _)) => format!("{}…", &s[..i]),
        None => s.to_string(),
    }
}

fn parse_content(raw: &str) -> Result<String> {
    let v: Value = serde_json::from_str(raw).map_err(|e| Error::Endpoint {
        status: Some(200),
        message: format!("response is not JSON: {e}"),
    })?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::Endpoint {
            status: Some(200),
            message: "response has no choices[0].message.content".into(),
        })
}

/// Trims, strips quotes, and keeps text up to the first sentence terminator.
pub fn first_sentence(text: &str) -> String {
    const QUOTES: &[char] = &['"', '\'', '“', '”', '‘', '’', '`'];
    let t = text.trim().trim_matches(QUOTES).trim();
    let cut = t
        .char_indices()
        .find(|&(_, c)| matches!(c, '.' | '!' | '?'))
        .map(|(i, c)| &t[..i + c.len_utf8()])
        .unwrap_or(t);
    // a line break ends the sentence even without punctuation
    let cut = cut.lines().next().unwrap_or("").trim();
    cut.trim_matches(QUOTES).trim().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cleanup_keeps_first_sentence() {
        assert_eq!(first_sentence("A. B."), "A.");
        assert_eq!(first_sentence("  \"He won the medal.\" Then more!"), "He won the medal.");
        assert_eq!(first_sentence("No terminator"), "No terminator");
        assert_eq!(first_sentence("line one\nline two."), "line one");
        assert_eq!(first_sentence("Really? Yes."), "Really?");
    }

    #[test]
    fn defaults_match_protocol() {
        let p = GenerationParams::default();
        assert_eq!((p.temperature, p.top_p, p.repetition_penalty, p.max_tokens), (0.7, 0.9, 1.2, 100));
        let c = ChatClient::new(
            EndpointConfig {
                url: "http://127.0.0.1:9/v1/chat/completions".into(),
                ..Default::default()
            },
            None,
        )
        .unwrap();
        let b = c.request_body("hi", &p, true);
        assert_eq!(b["messages"][0]["role"], "user");
        assert_eq!(b["repetition_penalty"], 1.2);
        assert!(c.request_body("hi", &p, false).get("repetition_penalty").is_none());
        assert!(ChatClient::new(EndpointConfig::default(), None).is_err());
    }

    #[test]
    fn parses_first_choice() {
        let raw = r#"{"choices":[{"message":{"role":"assistant","content":"Hi."}},{"message":{"content":"no"}}]}"#;
        assert_eq!(parse_content(raw).unwrap(), "Hi.");
        assert!(parse_content("{}").is_err());
    }
}
