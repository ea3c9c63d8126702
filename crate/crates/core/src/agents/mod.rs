//! The three LLM roles of the repair loop and the backend they talk to.
//!
//! The Repairer proposes a repaired element, the Checker looks for errors in
//! the proposal and the Optimizer asks for unneeded changes to be dropped.
//! Each role keeps its own [`AgentSession`]; only the Repairer produces
//! elements.

mod backend;
mod live;
mod prompt;
mod steps;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    prompt_hash, BackendError, ChatRequest, LlmBackend, ScriptEntry, ScriptFile, ScriptedBackend,
    SCRIPT_SCHEMA_VERSION,
};
pub use live::{LiveBackend, LiveConfig, API_KEY_ENV};
pub use prompt::{
    build_initial_repairer_prompt, describe_bug, estimate_tokens, PromptTemplates, RepairHints,
    TemplateError, PROMPT_TOKEN_BUDGET,
};
pub use steps::{
    checker_step, extract_proposal, optimizer_step, parse_verdict, repairer_step,
    unrelated_additions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Repairer,
    Checker,
    Optimizer,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Repairer => "repairer",
            AgentKind::Checker => "checker",
            AgentKind::Optimizer => "optimizer",
        })
    }
}

/// One agent's conversation: an optional system message, then alternating
/// user and assistant messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSession {
    pub agent: AgentKind,
    pub transcript: Vec<ChatMessage>,
    pub temperature: f64,
    /// Bug id and run index, forwarded to the backend for keyed replay.
    pub bug_id: String,
    pub run: u32,
}

impl AgentSession {
    pub fn new(agent: AgentKind, temperature: f64, bug_id: impl Into<String>, run: u32) -> Self {
        Self {
            agent,
            transcript: Vec::new(),
            temperature,
            bug_id: bug_id.into(),
            run,
        }
    }

    pub fn with_system(mut self, content: impl Into<String>) -> Self {
        self.transcript
            .insert(0, ChatMessage::new(Role::System, content));
        self
    }

    /// Appends `prompt`, asks the backend and appends the reply. On error the
    /// prompt is taken back out so the transcript stays alternating.
    pub fn exchange(
        &mut self,
        prompt: String,
        round: u32,
        backend: &dyn LlmBackend,
    ) -> Result<String, AgentError> {
        self.transcript.push(ChatMessage::new(Role::User, prompt));
        let request = ChatRequest {
            agent: self.agent,
            round,
            bug_id: self.bug_id.clone(),
            run: self.run,
            messages: self.transcript.clone(),
            temperature: self.temperature,
        };
        match backend.complete(&request) {
            Ok(reply) => {
                self.transcript
                    .push(ChatMessage::new(Role::Assistant, reply.clone()));
                Ok(reply)
            }
            Err(e) => {
                self.transcript.pop();
                Err(AgentError::BackendUnavailable(e.to_string()))
            }
        }
    }

    /// Whether the transcript is a system message (optional) followed by
    /// strictly alternating user and assistant messages.
    pub fn is_well_formed(&self) -> bool {
        let body = match self.transcript.first() {
            Some(m) if m.role == Role::System => &self.transcript[1..],
            _ => &self.transcript[..],
        };
        body.iter().enumerate().all(|(i, m)| {
            let expected = if i % 2 == 0 {
                Role::User
            } else {
                Role::Assistant
            };
            m.role == expected && !m.content.is_empty()
        })
    }
}

/// What the Repairer returned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairProposal {
    pub raw_response: String,
    /// Present iff the reply held exactly one fenced block that parsed.
    pub extracted_element: Option<crate::xml::XmlElement>,
    pub explanation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictKind {
    Checker,
    Optimizer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub explanation: String,
    pub kind: VerdictKind,
    /// Decided by local screening without asking the backend.
    #[serde(default)]
    pub screened: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("prompt too long: {tokens} tokens, budget {budget}")]
    PromptTooLong { tokens: usize, budget: usize },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("verdict has no [PASS]/[FAIL] marker")]
    UnparsableVerdict(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}
