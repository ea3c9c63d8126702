use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{AgentKind, ChatMessage, Role};

pub const SCRIPT_SCHEMA_VERSION: u32 = 1;

/// Everything a backend gets for one completion. `agent`, `round`,
/// `bug_id` and `run` are only used by keyed backends; a live backend sends
/// `messages` and `temperature`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub agent: AgentKind,
    /// 1-based loop round.
    pub round: u32,
    pub bug_id: String,
    pub run: u32,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn prompt_hash(&self) -> String {
        prompt_hash(&self.messages)
    }
}

/// Hex sha256 of the last user message; empty input hashes the empty string.
pub fn prompt_hash(messages: &[ChatMessage]) -> String {
    let last = messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(|m| m.content.as_str())
        .unwrap_or("");
    hex::encode(Sha256::digest(last.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("{0}")]
    Unavailable(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

/// One canned reply. Unset keys match anything.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub agent: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    pub response: String,
}

impl ScriptEntry {
    /// Number of keys set, or `None` when a set key disagrees.
    fn specificity(&self, r: &ChatRequest, hash: &str) -> Option<usize> {
        if self.agent != r.agent {
            return None;
        }
        let mut n = 0;
        if let Some(b) = &self.bug {
            (b == &r.bug_id).then_some(())?;
            n += 1;
        }
        if let Some(run) = self.run {
            (run == r.run).then_some(())?;
            n += 1;
        }
        if let Some(round) = self.round {
            (round == r.round).then_some(())?;
            n += 1;
        }
        if let Some(h) = &self.prompt_sha256 {
            h.eq_ignore_ascii_case(hash).then_some(())?;
            n += 1;
        }
        Some(n)
    }
}

/// On-disk format of a scripted transcript:
///
/// ```json
/// {"schema_version": 1,
///  "entries": [{"agent": "repairer", "bug": "b1", "round": 1, "response": "..."}]}
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptFile {
    pub schema_version: u32,
    pub entries: Vec<ScriptEntry>,
}

/// Replays canned replies. The entry with the most matching keys wins; among
/// equally specific entries the first one in the file wins.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self { entries }
    }

    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        let file: ScriptFile = serde_json::from_str(text)
            .map_err(|e| BackendError::Config(format!("script file: {e}")))?;
        if file.schema_version != SCRIPT_SCHEMA_VERSION {
            return Err(BackendError::Config(format!(
                "script file: unsupported schema version {}",
                file.schema_version
            )));
        }
        Ok(Self::new(file.entries))
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    pub fn to_script_file(&self) -> ScriptFile {
        ScriptFile {
            schema_version: SCRIPT_SCHEMA_VERSION,
            entries: self.entries.clone(),
        }
    }

    /// Adds entries after the existing ones.
    pub fn extend(&mut self, entries: impl IntoIterator<Item = ScriptEntry>) {
        self.entries.extend(entries);
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let hash = request.prompt_hash();
        let mut best: Option<(usize, &ScriptEntry)> = None;
        for e in &self.entries {
            if let Some(n) = e.specificity(request, &hash) {
                if best.is_none_or(|(m, _)| n > m) {
                    best = Some((n, e));
                }
            }
        }
        best.map(|(_, e)| e.response.clone()).ok_or_else(|| {
            BackendError::Unavailable(format!(
                "no scripted reply for {} on {} run {} round {}",
                request.agent, request.bug_id, request.run, request.round
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(agent: AgentKind, round: u32, prompt: &str) -> ChatRequest {
        ChatRequest {
            agent,
            round,
            bug_id: "b".into(),
            run: 0,
            messages: vec![ChatMessage::new(Role::User, prompt)],
            temperature: 0.7,
        }
    }

    fn entry(agent: AgentKind, round: Option<u32>, response: &str) -> ScriptEntry {
        ScriptEntry {
            agent,
            bug: None,
            run: None,
            round,
            prompt_sha256: None,
            response: response.into(),
        }
    }

    #[test]
    fn most_specific_entry_wins() {
        let b = ScriptedBackend::new(vec![
            entry(AgentKind::Checker, None, "[PASS] any"),
            entry(AgentKind::Checker, Some(2), "[FAIL] round two"),
        ]);
        assert_eq!(
            b.complete(&request(AgentKind::Checker, 1, "x")).unwrap(),
            "[PASS] any"
        );
        assert_eq!(
            b.complete(&request(AgentKind::Checker, 2, "x")).unwrap(),
            "[FAIL] round two"
        );
        assert!(matches!(
            b.complete(&request(AgentKind::Optimizer, 1, "x")),
            Err(BackendError::Unavailable(_))
        ));
    }

    #[test]
    fn prompt_hash_keys() {
        let mut e = entry(AgentKind::Repairer, None, "hashed");
        e.prompt_sha256 = Some(prompt_hash(&[ChatMessage::new(Role::User, "exact prompt")]));
        let b = ScriptedBackend::new(vec![entry(AgentKind::Repairer, None, "fallback"), e]);
        assert_eq!(
            b.complete(&request(AgentKind::Repairer, 1, "exact prompt"))
                .unwrap(),
            "hashed"
        );
        assert_eq!(
            b.complete(&request(AgentKind::Repairer, 1, "other"))
                .unwrap(),
            "fallback"
        );
    }

    #[test]
    fn script_file_round_trip() {
        let b = ScriptedBackend::new(vec![entry(AgentKind::Optimizer, Some(1), "[PASS]")]);
        let text = serde_json::to_string(&b.to_script_file()).unwrap();
        assert_eq!(
            ScriptedBackend::from_json(&text).unwrap().entries(),
            b.entries()
        );
        assert!(ScriptedBackend::from_json(r#"{"schema_version": 9, "entries": []}"#).is_err());
    }
}
