#![allow(dead_code)]

use std::sync::atomic::{AtomicU32, Ordering};

use compat_repair::agents::{
    BackendError, ChatRequest, LlmBackend, PromptTemplates, ScriptedBackend,
};
use compat_repair::eval::{bundled_corpus, BugRecord, Difficulty};
use compat_repair::fitness::CompatBug;
use compat_repair::kb::{render, KnowledgeBase, RenderState};
use compat_repair::orchestrator::{
    repair_bug, ClockMode, RepairConfig, RepairOutcome, RepairRequest, SessionLog,
};
use compat_repair::xml::XmlElement;

pub const GOLDEN_SCRIPT: &str = include_str!("../../assets/transcripts/golden.json");

pub fn kb() -> KnowledgeBase {
    KnowledgeBase::bundled()
}

pub fn corpus(kb: &KnowledgeBase) -> Vec<BugRecord> {
    bundled_corpus(kb).expect("bundled corpus loads")
}

pub fn subset(records: &[BugRecord], d: Difficulty) -> Vec<BugRecord> {
    records
        .iter()
        .filter(|r| r.difficulty == d)
        .cloned()
        .collect()
}

pub fn record<'a>(records: &'a [BugRecord], id: &str) -> &'a BugRecord {
    records
        .iter()
        .find(|r| r.id == id)
        .unwrap_or_else(|| panic!("no bug {id}"))
}

pub fn golden_backend() -> ScriptedBackend {
    ScriptedBackend::from_json(GOLDEN_SCRIPT).expect("golden script parses")
}

pub fn logical_config() -> RepairConfig {
    RepairConfig {
        clock: ClockMode::Logical,
        ..RepairConfig::default()
    }
}

pub fn run(
    record: &BugRecord,
    kb: &KnowledgeBase,
    backend: &dyn LlmBackend,
    cfg: &RepairConfig,
    seed: u64,
) -> (RepairOutcome, SessionLog) {
    let req = RepairRequest {
        bug_id: &record.id,
        run: 0,
        bug: &record.bug,
        seed,
    };
    repair_bug(&req, kb, backend, cfg, &PromptTemplates::bundled())
}

/// Replies with a fixed text and counts calls.
pub struct FixedBackend {
    pub reply: String,
    pub calls: AtomicU32,
}

impl FixedBackend {
    pub fn new(reply: &str) -> Self {
        Self {
            reply: reply.to_string(),
            calls: AtomicU32::new(0),
        }
    }

    pub fn calls(&self) -> u32 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl LlmBackend for FixedBackend {
    fn complete(&self, _: &ChatRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.reply.clone())
    }
}

/// Always fails.
pub struct DownBackend;

impl LlmBackend for DownBackend {
    fn complete(&self, _: &ChatRequest) -> Result<String, BackendError> {
        Err(BackendError::Unavailable("connection refused".into()))
    }
}

/// The document with the issue-inducing attributes removed, built without
/// the library's own stripping helper.
pub fn strip_issue_attrs(bug: &CompatBug) -> XmlElement {
    let mut doc = bug.document.clone();
    let ix = bug.locator.resolve(&doc).expect("locator resolves");
    let el = doc.descendant_mut(&ix).expect("element exists");
    for a in &bug.issue_attrs {
        el.remove_attr(a);
    }
    doc
}

/// Fields whose target-level value changes when the issue-inducing
/// attributes are removed.
pub fn key_fields_oracle(bug: &CompatBug, kb: &KnowledgeBase) -> Vec<(String, String)> {
    let app = render(&bug.document, bug.target_level, kb);
    let stripped = render(&strip_issue_attrs(bug), bug.target_level, kb);
    let mut keys: Vec<(String, String)> = Vec::new();
    for s in [&app, &stripped] {
        for (e, fields) in &s.elements {
            for f in fields.keys() {
                keys.push((e.clone(), f.clone()));
            }
        }
    }
    keys.sort();
    keys.dedup();
    keys.retain(|(e, f)| app.get(e, f) != stripped.get(e, f));
    keys
}

pub fn same_fields(a: &RenderState, b: &RenderState, keys: &[(String, String)]) -> bool {
    keys.iter()
        .all(|(e, f)| a.get(e, f).is_some() && a.get(e, f) == b.get(e, f))
}
