//! Corpus loading, k-run evaluation, judging and reports.

mod corpus;
mod judge;

use std::collections::BTreeMap;
use std::fmt::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{LlmBackend, PromptTemplates};
use crate::kb::KnowledgeBase;
use crate::orchestrator::{repair_bug, OutcomeKind, RepairConfig, RepairRequest, SessionLog};

pub use corpus::{
    bundled_corpus, load_bug_file, load_corpus, validate_record, BugRecord, CorpusError,
    Difficulty, Manifest, ManifestEntry, CORPUS_SCHEMA_VERSION,
};
pub use judge::{judge, FailureCategory, JudgeFacts, Judgment};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Per-run seed: the first eight bytes (big-endian) of
/// `sha256(base_le || bug_id || 0x00 || run_le)`.
pub fn derive_seed(base: u64, bug_id: &str, run: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(bug_id.as_bytes());
    h.update([0u8]);
    h.update(run.to_le_bytes());
    let digest = h.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: u32,
    pub seed: u64,
    pub outcome: OutcomeKind,
    pub rounds_used: u32,
    pub backend_calls: u32,
    pub judgment: Judgment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugResult {
    pub bug_id: String,
    pub runs: Vec<RunResult>,
}

impl BugResult {
    pub fn judgments(&self) -> Vec<Judgment> {
        self.runs.iter().map(|r| r.judgment).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Metrics {
    /// Fraction of all runs judged correct.
    pub correct: f64,
    pub overfitting: f64,
    /// Fraction of bugs with at least one correct run.
    pub correct_at_k: f64,
}

/// Metrics of a bug-by-run judgment matrix. Rows may have different
/// lengths; empty input gives zeros.
pub fn compute_metrics(matrix: &[Vec<Judgment>]) -> Metrics {
    let runs: usize = matrix.iter().map(Vec::len).sum();
    if runs == 0 {
        return Metrics::default();
    }
    let count = |j: Judgment| matrix.iter().flatten().filter(|&&x| x == j).count() as f64;
    let solved = matrix
        .iter()
        .filter(|row| row.contains(&Judgment::Correct))
        .count() as f64;
    Metrics {
        correct: count(Judgment::Correct) / runs as f64,
        overfitting: count(Judgment::Overfitting) / runs as f64,
        correct_at_k: solved / matrix.len() as f64,
    }
}

/// Failed runs per category; every category is listed.
pub fn failure_histogram(matrix: &[Vec<Judgment>]) -> BTreeMap<FailureCategory, u32> {
    let mut h: BTreeMap<FailureCategory, u32> =
        FailureCategory::ALL.iter().map(|&c| (c, 0)).collect();
    for j in matrix.iter().flatten() {
        if let Judgment::Failed(c) = j {
            *h.get_mut(c).expect("all categories present") += 1;
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub config: RepairConfig,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub failure_histogram: BTreeMap<FailureCategory, u32>,
    /// Sorted by bug id.
    pub bugs: Vec<BugResult>,
}

impl MethodReport {
    pub fn new(method: String, config: RepairConfig, mut bugs: Vec<BugResult>) -> Self {
        bugs.sort_by(|a, b| a.bug_id.cmp(&b.bug_id));
        for b in &mut bugs {
            b.runs.sort_by_key(|r| r.run);
        }
        let matrix: Vec<Vec<Judgment>> = bugs.iter().map(BugResult::judgments).collect();
        Self {
            method,
            config,
            metrics: compute_metrics(&matrix),
            failure_histogram: failure_histogram(&matrix),
            bugs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub methods: Vec<MethodReport>,
}

impl Default for EvaluationReport {
    fn default() -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            methods: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Machine,
}

fn percent(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

/// Renders the report. The table has one row per method; the machine form
/// is pretty-printed JSON with a trailing newline.
pub fn emit_report(report: &EvaluationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Machine => {
            let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
            s.push('\n');
            s
        }
        ReportFormat::Table => {
            let mut s = String::from(
                "| Method | Correct | Overfitting | Correct@k |\n|---|---:|---:|---:|\n",
            );
            for m in &report.methods {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} |",
                    m.method,
                    percent(m.metrics.correct),
                    percent(m.metrics.overfitting),
                    percent(m.metrics.correct_at_k)
                );
            }
            s
        }
    }
}

/// Runs every bug `cfg.runs_k` times, judges each run and returns the
/// report with one session log per run (logs carry their judgment). Runs
/// execute in parallel; results are ordered by bug id and run.
pub fn evaluate(
    corpus: &[BugRecord],
    kb: &KnowledgeBase,
    backend: &dyn LlmBackend,
    cfg: &RepairConfig,
    templates: &PromptTemplates,
) -> (EvaluationReport, Vec<SessionLog>) {
    let jobs: Vec<(&BugRecord, u32)> = corpus
        .iter()
        .flat_map(|r| (0..cfg.runs_k).map(move |k| (r, k)))
        .collect();
    let mut done: Vec<(RunResult, SessionLog)> = jobs
        .par_iter()
        .map(|&(record, run)| run_one(record, run, kb, backend, cfg, templates))
        .collect();
    done.sort_by(|a, b| (&a.1.bug_id, a.1.run).cmp(&(&b.1.bug_id, b.1.run)));

    let mut bugs: Vec<BugResult> = Vec::new();
    for (result, log) in &done {
        match bugs.last_mut() {
            Some(b) if b.bug_id == log.bug_id => b.runs.push(result.clone()),
            _ => bugs.push(BugResult {
                bug_id: log.bug_id.clone(),
                runs: vec![result.clone()],
            }),
        }
    }
    let report = EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        methods: vec![MethodReport::new(cfg.method.clone(), cfg.clone(), bugs)],
    };
    (report, done.into_iter().map(|(_, log)| log).collect())
}

/// Repairs one bug once with its derived seed and judges the result.
pub fn run_one(
    record: &BugRecord,
    run: u32,
    kb: &KnowledgeBase,
    backend: &dyn LlmBackend,
    cfg: &RepairConfig,
    templates: &PromptTemplates,
) -> (RunResult, SessionLog) {
    let seed = derive_seed(cfg.seed, &record.id, run);
    let req = RepairRequest {
        bug_id: &record.id,
        run,
        bug: &record.bug,
        seed,
    };
    let (outcome, mut log) = repair_bug(&req, kb, backend, cfg, templates);
    let judgment = judge(&outcome.final_document, &record.bug, kb);
    log.judgment = Some(judgment);
    let result = RunResult {
        run,
        seed,
        outcome: outcome.kind,
        rounds_used: outcome.rounds_used,
        backend_calls: outcome.backend_calls,
        judgment,
        backend_error: outcome.backend_error.clone(),
    };
    (result, log)
}

/// Rebuilds a report from persisted session logs: one row per method, in
/// name order. Logs without an outcome or judgment are skipped.
pub fn report_from_sessions(logs: &[SessionLog]) -> EvaluationReport {
    let mut by_method: BTreeMap<&str, (RepairConfig, BTreeMap<&str, Vec<RunResult>>)> =
        BTreeMap::new();
    for log in logs {
        let (Some(outcome), Some(judgment)) = (&log.outcome, log.judgment) else {
            continue;
        };
        let entry = by_method
            .entry(log.method.as_str())
            .or_insert_with(|| (log.config.clone(), BTreeMap::new()));
        entry
            .1
            .entry(log.bug_id.as_str())
            .or_default()
            .push(RunResult {
                run: log.run,
                seed: log.seed,
                outcome: outcome.kind,
                rounds_used: outcome.rounds_used,
                backend_calls: outcome.backend_calls,
                judgment,
                backend_error: outcome.backend_error.clone(),
            });
    }
    EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        methods: by_method
            .into_iter()
            .map(|(method, (config, bugs))| {
                let bugs = bugs
                    .into_iter()
                    .map(|(id, runs)| BugResult {
                        bug_id: id.to_string(),
                        runs,
                    })
                    .collect();
                MethodReport::new(method.to_string(), config, bugs)
            })
            .collect(),
    }
}
