use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RepairConfig;
use crate::agents::{AgentKind, ScriptEntry, ScriptedBackend};
use crate::eval::Judgment;
use crate::fitness::FitnessScore;
use crate::kb::CrashReason;
use crate::xml::{AttrName, Patch, XmlElement};

pub const SESSION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Strategy1,
    FitnessInapplicableAccept,
    LlmConverged,
    TwiceConsecutiveAccept,
    CombinedFallback,
    Unrepaired,
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutcomeKind::Strategy1 => "strategy1",
            OutcomeKind::FitnessInapplicableAccept => "fitness_inapplicable_accept",
            OutcomeKind::LlmConverged => "llm_converged",
            OutcomeKind::TwiceConsecutiveAccept => "twice_consecutive_accept",
            OutcomeKind::CombinedFallback => "combined_fallback",
            OutcomeKind::Unrepaired => "unrepaired",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub kind: OutcomeKind,
    /// The repaired document, stored in canonical text form.
    #[serde(with = "document_text")]
    pub final_document: XmlElement,
    pub patch: Patch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitness: Option<FitnessScore>,
    pub rounds_used: u32,
    pub backend_calls: u32,
    #[serde(with = "millis")]
    pub wall_time: Duration,
    #[serde(default)]
    pub time_budget_exceeded: bool,
    /// Set when the loop was cut short by a backend failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_error: Option<String>,
}

mod document_text {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::xml::{parse_document, serialize_canonical, XmlElement};

    pub fn serialize<S: Serializer>(doc: &XmlElement, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&serialize_canonical(doc))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<XmlElement, D::Error> {
        let s = String::deserialize(d)?;
        parse_document(&s).map_err(serde::de::Error::custom)
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Short form of a scored patch for the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEdit {
    pub patch: String,
    pub score: f64,
    pub consistent: bool,
    pub crashed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionEvent {
    KeyFields {
        fields: Vec<String>,
        candidates: Vec<AttrName>,
    },
    SingleLineSearch {
        patches: Vec<ScoredEdit>,
        /// Index of the patch accepted by strategy 1.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        accepted: Option<usize>,
    },
    PromptSkipped {
        reason: String,
    },
    Prompt {
        agent: AgentKind,
        round: u32,
        content: String,
    },
    Response {
        agent: AgentKind,
        round: u32,
        prompt_sha256: String,
        content: String,
    },
    Proposal {
        round: u32,
        extracted: bool,
    },
    Verdict {
        agent: AgentKind,
        round: u32,
        pass: bool,
        screened: bool,
        explanation: String,
    },
    Fitness {
        round: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        score: Option<f64>,
        #[serde(default)]
        consistent: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        crash: Option<CrashReason>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        inapplicable: Option<String>,
    },
    Feedback {
        round: u32,
        content: String,
    },
    BackendError {
        agent: AgentKind,
        round: u32,
        detail: String,
    },
    TimeBudgetExceeded {
        round: u32,
    },
    Fallback {
        reason: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        members: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        score: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub seq: u32,
    pub t_ms: u64,
    pub event: SessionEvent,
}

/// Everything one repair run did, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub schema_version: u32,
    pub bug_id: String,
    pub run: u32,
    pub seed: u64,
    pub method: String,
    pub config: RepairConfig,
    pub records: Vec<SessionRecord>,
    pub outcome: Option<RepairOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judgment: Option<Judgment>,
}

#[derive(Debug, Error)]
pub enum SessionIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
}

impl SessionLog {
    pub fn new(bug_id: &str, run: u32, seed: u64, config: &RepairConfig) -> Self {
        Self {
            schema_version: SESSION_SCHEMA_VERSION,
            bug_id: bug_id.to_string(),
            run,
            seed,
            method: config.method.clone(),
            config: config.clone(),
            records: Vec::new(),
            outcome: None,
            judgment: None,
        }
    }

    pub fn push(&mut self, t: Duration, event: SessionEvent) {
        self.records.push(SessionRecord {
            seq: self.records.len() as u32,
            t_ms: t.as_millis() as u64,
            event,
        });
    }

    pub fn events(&self) -> impl Iterator<Item = &SessionEvent> {
        self.records.iter().map(|r| &r.event)
    }

    /// Backend replies recorded in this session, keyed by bug, run, round
    /// and prompt hash.
    pub fn script_entries(&self) -> Vec<ScriptEntry> {
        self.events()
            .filter_map(|e| match e {
                SessionEvent::Response {
                    agent,
                    round,
                    prompt_sha256,
                    content,
                } => Some(ScriptEntry {
                    agent: *agent,
                    bug: Some(self.bug_id.clone()),
                    run: Some(self.run),
                    round: Some(*round),
                    prompt_sha256: Some(prompt_sha256.clone()),
                    response: content.clone(),
                }),
                _ => None,
            })
            .collect()
    }

    /// A scripted backend that answers exactly as the backend of this
    /// session did.
    pub fn replay_backend(&self) -> ScriptedBackend {
        ScriptedBackend::new(self.script_entries())
    }

    pub fn file_name(&self) -> String {
        session_file_name(&self.bug_id, self.run)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("session logs serialize");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, SessionIoError> {
        let text = std::fs::read_to_string(path).map_err(|source| SessionIoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let log: SessionLog = serde_json::from_str(&text).map_err(|e| SessionIoError::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        if log.schema_version != SESSION_SCHEMA_VERSION {
            return Err(SessionIoError::Format {
                path: path.display().to_string(),
                reason: format!("unsupported schema version {}", log.schema_version),
            });
        }
        Ok(log)
    }
}

/// `<bug>__run<k>.json`, with characters outside `[A-Za-z0-9._-]` replaced.
pub fn session_file_name(bug_id: &str, run: u32) -> String {
    let safe: String = bug_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}__run{run}.json")
}

/// Writes the log into `dir` (created if missing) and returns the path.
pub fn persist_session(log: &SessionLog, dir: &Path) -> Result<PathBuf, SessionIoError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| SessionIoError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let path = dir.join(log.file_name());
    std::fs::write(&path, log.to_json()).map_err(io(&path))?;
    Ok(path)
}

/// Loads every `*.json` session in `dir`, sorted by bug id then run.
pub fn load_sessions(dir: &Path) -> Result<Vec<SessionLog>, SessionIoError> {
    let entries = std::fs::read_dir(dir).map_err(|source| SessionIoError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut logs = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|source| SessionIoError::Io {
                path: dir.display().to_string(),
                source,
            })?
            .path();
        if path.extension().is_some_and(|e| e == "json") {
            logs.push(SessionLog::load(&path)?);
        }
    }
    logs.sort_by(|a, b| (&a.bug_id, a.run, &a.method).cmp(&(&b.bug_id, b.run, &b.method)));
    Ok(logs)
}
