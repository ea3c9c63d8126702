use std::fmt;
use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{BackendError, ChatRequest, LlmBackend};

/// The only place the API key is read from.
pub const API_KEY_ENV: &str = "COMPAT_REPAIR_API_KEY";

/// Endpoint settings, read from an optional TOML file. Credentials are not
/// part of it.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiveConfig {
    /// Full URL of a chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_timeout", with = "duration_text")]
    pub request_timeout: Duration,
    #[serde(default = "default_retries")]
    pub max_attempts: u32,
}

fn default_timeout() -> Duration {
    Duration::from_secs(120)
}

fn default_retries() -> u32 {
    3
}

mod duration_text {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let s = String::deserialize(d)?;
        humantime::parse_duration(&s).map_err(serde::de::Error::custom)
    }
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4".into(),
            request_timeout: default_timeout(),
            max_attempts: default_retries(),
        }
    }
}

impl LiveConfig {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        // the full error quotes the offending line, which may hold a secret
        toml::from_str(&text)
            .map_err(|e| BackendError::Config(format!("{}: {}", path.display(), e.message())))
    }
}

/// Chat-completion client over HTTPS.
pub struct LiveBackend {
    config: LiveConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl fmt::Debug for LiveBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LiveBackend")
            .field("config", &self.config)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl LiveBackend {
    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env(config: LiveConfig) -> Result<Self, BackendError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| BackendError::Config(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self::with_key(config, key))
    }

    fn with_key(config: LiveConfig, api_key: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.request_timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            api_key,
            agent,
        }
    }

    fn request_body(&self, request: &ChatRequest) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
            .collect();
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, (bool, String)> {
        let mut response = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| (true, e.to_string()))?;
        let status = response.status().as_u16();
        if status != 200 {
            let retry = status == 429 || status >= 500;
            return Err((retry, format!("HTTP {status}")));
        }
        let value: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| (true, e.to_string()))?;
        extract_content(&value)
            .ok_or_else(|| (false, "reply has no choices[0].message.content".to_string()))
    }
}

fn extract_content(value: &Value) -> Option<String> {
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
}

impl LlmBackend for LiveBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let body = self.request_body(request);
        let attempts = self.config.max_attempts.max(1);
        let mut last = String::new();
        for n in 1..=attempts {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((retry, msg)) => {
                    log::warn!(
                        "{} request {n}/{attempts} to {} failed: {msg}",
                        request.agent,
                        self.config.endpoint
                    );
                    last = msg;
                    if !retry {
                        break;
                    }
                    if n < attempts {
                        std::thread::sleep(Duration::from_millis(500 * u64::from(n)));
                    }
                }
            }
        }
        Err(BackendError::Unavailable(last))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentKind, ChatMessage, Role};

    #[test]
    fn config_parses_durations_and_rejects_keys() {
        let c: LiveConfig = toml::from_str(
            "endpoint = \"https://example.test/v1/chat/completions\"\nmodel = \"m\"\nrequest_timeout = \"30s\"\n",
        )
        .unwrap();
        assert_eq!(c.request_timeout, Duration::from_secs(30));
        assert_eq!(c.max_attempts, 3);
        assert!(
            toml::from_str::<LiveConfig>("endpoint = \"x\"\nmodel = \"m\"\napi_key = \"k\"\n")
                .is_err()
        );
    }

    #[test]
    fn debug_output_hides_the_key() {
        let b = LiveBackend::with_key(LiveConfig::default(), "sk-secret-value".into());
        let shown = format!("{b:?}");
        assert!(!shown.contains("sk-secret-value"));
        assert!(shown.contains("redacted"));
    }

    #[test]
    fn body_carries_messages_and_temperature() {
        let b = LiveBackend::with_key(LiveConfig::default(), "k".into());
        let body = b.request_body(&ChatRequest {
            agent: AgentKind::Checker,
            round: 1,
            bug_id: "x".into(),
            run: 0,
            messages: vec![
                ChatMessage::new(Role::System, "s"),
                ChatMessage::new(Role::User, "u"),
            ],
            temperature: 0.7,
        });
        assert_eq!(body["messages"][1]["role"], "user");
        assert_eq!(body["temperature"], 0.7);
        assert!(!body.to_string().contains("\"k\""));
    }

    #[test]
    fn content_extraction() {
        let v = json!({"choices": [{"message": {"role": "assistant", "content": "[PASS]"}}]});
        assert_eq!(extract_content(&v).as_deref(), Some("[PASS]"));
        assert_eq!(extract_content(&json!({})), None);
    }
}
