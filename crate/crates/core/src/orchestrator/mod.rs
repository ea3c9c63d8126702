//! The repair workflow for one bug.
//!
//! 1. Find the key fields.
//! 2. With key fields, search single one-line patches and stop at the first
//!    one that scores 1 without inconsistency or crash.
//! 3. Otherwise run the Repairer/Checker/Optimizer loop for at most
//!    `loop_budget` rounds.
//! 4. If the loop gives up, fall back to a sampled combination of the
//!    one-line patches (only possible with key fields).

mod config;
mod session;

use crate::agents::{
    build_initial_repairer_prompt, checker_step, optimizer_step, prompt_hash, repairer_step,
    AgentError, AgentKind, AgentSession, LlmBackend, PromptTemplates, RepairHints, RepairProposal,
    Role, Verdict, VerdictKind,
};
use crate::fitness::{
    find_strategy1, fitness_score, identify_key_fields, sample_combined_patches,
    search_single_line_patches, CandidatePatch, CompatBug, FitnessError, FitnessScore, KeyFieldSet,
};
use crate::kb::KnowledgeBase;
use crate::xml::{apply_patch, diff_to_patch, serialize_canonical, Patch, XmlElement};

use config::Clock;
pub use config::{ClockMode, FeedbackMode, RepairConfig, LOGICAL_CALL_COST};
pub use session::{
    load_sessions, persist_session, session_file_name, OutcomeKind, RepairOutcome, ScoredEdit,
    SessionEvent, SessionIoError, SessionLog, SessionRecord, SESSION_SCHEMA_VERSION,
};

/// Consecutive unusable Repairer replies, or consecutive crashing
/// proposals, after which the loop gives up.
pub const MAX_CONSECUTIVE_FAILURES: u32 = 3;

/// Feedback for a proposal that passed both reviewers but not the fitness
/// check.
pub fn fitness_feedback(
    fs: &FitnessScore,
    mode: FeedbackMode,
    bug: &CompatBug,
    templates: &PromptTemplates,
) -> Result<String, AgentError> {
    if let Some(crash) = &fs.crash {
        return Ok(templates.render("crash_feedback", &[("reason", &crash.to_string())])?);
    }
    match mode {
        FeedbackMode::Coarse => Ok(templates.get("coarse_feedback")?.to_string()),
        FeedbackMode::Fine => {
            let [low, high, target] = bug.levels();
            let mut table = format!(
                "| field | repaired (API {target}) | original (API {target}) | repaired (API {low}) | repaired (API {high}) |\n|---|---|---|---|---|"
            );
            for d in fs.per_field_diffs.iter().filter(|d| d.differs()) {
                table.push_str(&format!(
                    "\n| {} | {} | {} | {} | {} |",
                    d.field, d.repaired, d.original, d.repaired_low, d.repaired_high
                ));
            }
            Ok(templates.render(
                "fine_feedback",
                &[
                    ("table", &table),
                    ("target", &target.to_string()),
                    ("low", &low.to_string()),
                    ("high", &high.to_string()),
                ],
            )?)
        }
    }
}

/// One bug, one run.
pub struct RepairRequest<'a> {
    pub bug_id: &'a str,
    pub run: u32,
    pub bug: &'a CompatBug,
    /// Seed for the combination fallback.
    pub seed: u64,
}

struct Runner<'a> {
    req: &'a RepairRequest<'a>,
    kb: &'a KnowledgeBase,
    backend: &'a dyn LlmBackend,
    cfg: &'a RepairConfig,
    templates: &'a PromptTemplates,
    clock: Clock,
    log: SessionLog,
    backend_calls: u32,
    rounds_used: u32,
    time_budget_exceeded: bool,
    backend_error: Option<String>,
}

// short-lived and moved once; boxing would buy nothing
#[allow(clippy::large_enum_variant)]
enum Accepted {
    Yes(OutcomeKind, XmlElement, Patch, Option<FitnessScore>),
    No(String),
}

/// Runs the whole workflow and returns the outcome with its session log.
pub fn repair_bug(
    req: &RepairRequest<'_>,
    kb: &KnowledgeBase,
    backend: &dyn LlmBackend,
    cfg: &RepairConfig,
    templates: &PromptTemplates,
) -> (RepairOutcome, SessionLog) {
    let mut r = Runner {
        req,
        kb,
        backend,
        cfg,
        templates,
        clock: Clock::start(cfg.clock),
        log: SessionLog::new(req.bug_id, req.run, req.seed, cfg),
        backend_calls: 0,
        rounds_used: 0,
        time_budget_exceeded: false,
        backend_error: None,
    };
    let outcome = r.run();
    let mut log = r.log;
    log.outcome = Some(outcome.clone());
    (outcome, log)
}

impl Runner<'_> {
    fn note(&mut self, event: SessionEvent) {
        let t = self.clock.elapsed();
        self.log.push(t, event);
    }

    fn out_of_time(&mut self) -> bool {
        if !self.time_budget_exceeded && self.clock.elapsed() >= self.cfg.time_budget {
            self.time_budget_exceeded = true;
            let round = self.rounds_used;
            self.note(SessionEvent::TimeBudgetExceeded { round });
        }
        self.time_budget_exceeded
    }

    fn finish(
        &self,
        kind: OutcomeKind,
        doc: XmlElement,
        patch: Patch,
        fitness: Option<FitnessScore>,
    ) -> RepairOutcome {
        RepairOutcome {
            kind,
            final_document: doc,
            patch,
            fitness,
            rounds_used: self.rounds_used,
            backend_calls: self.backend_calls,
            wall_time: self.clock.elapsed(),
            time_budget_exceeded: self.time_budget_exceeded,
            backend_error: self.backend_error.clone(),
        }
    }

    fn run(&mut self) -> RepairOutcome {
        let bug = self.req.bug;
        let kf = identify_key_fields(bug, self.kb);
        self.note(SessionEvent::KeyFields {
            fields: kf
                .key_fields
                .iter()
                .flat_map(|f| f.fields.iter().map(ToString::to_string))
                .collect(),
            candidates: kf.candidates.clone(),
        });

        let mut patches = Vec::new();
        let hints = match &kf.key_fields {
            Some(f) => {
                patches = search_single_line_patches(
                    bug,
                    f,
                    &kf.candidates,
                    self.kb,
                    self.cfg.search_budget,
                );
                let accepted = find_strategy1(&patches).cloned();
                self.note(SessionEvent::SingleLineSearch {
                    patches: patches.iter().map(scored_edit).collect(),
                    accepted: accepted
                        .as_ref()
                        .and_then(|a| patches.iter().position(|p| p == a)),
                });
                if let Some(p) = accepted {
                    let doc = apply_patch(&bug.document, &p.patch).expect("searched patches apply");
                    return self.finish(OutcomeKind::Strategy1, doc, p.patch, Some(p.fitness));
                }
                RepairHints::ScoredPatches(patches.clone())
            }
            None => RepairHints::CandidateAttributes(kf.candidates.clone()),
        };

        let reason = match self.interaction_loop(kf.key_fields.as_ref(), &hints) {
            Accepted::Yes(kind, doc, patch, fitness) => {
                return self.finish(kind, doc, patch, fitness)
            }
            Accepted::No(reason) => reason,
        };

        match &kf.key_fields {
            Some(f) => self.fallback(f, &patches, reason),
            None => {
                self.note(SessionEvent::Fallback {
                    reason: format!("{reason}; no key fields to combine patches against"),
                    members: None,
                    score: None,
                });
                self.finish(
                    OutcomeKind::Unrepaired,
                    bug.document.clone(),
                    Patch::identity(),
                    None,
                )
            }
        }
    }

    fn fallback(
        &mut self,
        f: &KeyFieldSet,
        patches: &[CandidatePatch],
        reason: String,
    ) -> RepairOutcome {
        let bug = self.req.bug;
        match sample_combined_patches(patches, bug, f, self.kb, self.cfg.n_samples, self.req.seed) {
            Some(c) => {
                self.note(SessionEvent::Fallback {
                    reason,
                    members: Some(c.members.clone()),
                    score: Some(c.fitness.score),
                });
                let doc = apply_patch(&bug.document, &c.patch).expect("combined patches apply");
                self.finish(OutcomeKind::CombinedFallback, doc, c.patch, Some(c.fitness))
            }
            None => {
                self.note(SessionEvent::Fallback {
                    reason: format!("{reason}; no one-line patches to combine"),
                    members: None,
                    score: None,
                });
                self.finish(
                    OutcomeKind::Unrepaired,
                    bug.document.clone(),
                    Patch::identity(),
                    None,
                )
            }
        }
    }

    /// Runs one agent exchange, logging the prompt and the reply.
    fn ask<T>(
        &mut self,
        agent: AgentKind,
        round: u32,
        session: &mut AgentSession,
        step: impl FnOnce(&mut AgentSession) -> Result<T, AgentError>,
    ) -> Result<T, AgentError> {
        let before = session.transcript.len();
        let asked_at = self.clock.elapsed();
        let result = step(session);
        let sent = session.transcript.len() > before
            || matches!(result, Err(AgentError::BackendUnavailable(_)));
        if sent {
            self.backend_calls += 1;
            self.clock.backend_call();
        }
        let new: Vec<_> = session.transcript[before..].to_vec();
        let mut hash = String::new();
        for m in new {
            match m.role {
                Role::User => {
                    hash = prompt_hash(std::slice::from_ref(&m));
                    self.log.push(
                        asked_at,
                        SessionEvent::Prompt {
                            agent,
                            round,
                            content: m.content,
                        },
                    );
                }
                Role::Assistant => self.note(SessionEvent::Response {
                    agent,
                    round,
                    prompt_sha256: hash.clone(),
                    content: m.content,
                }),
                Role::System => {}
            }
        }
        if let Err(AgentError::BackendUnavailable(detail)) = &result {
            self.note(SessionEvent::BackendError {
                agent,
                round,
                detail: detail.clone(),
            });
            self.backend_error = Some(detail.clone());
        }
        result
    }

    fn verdict(
        &mut self,
        agent: AgentKind,
        round: u32,
        result: Result<Verdict, AgentError>,
    ) -> Result<Verdict, String> {
        let v = match result {
            Ok(v) => v,
            Err(AgentError::UnparsableVerdict(raw)) => Verdict {
                pass: false,
                explanation: raw,
                kind: match agent {
                    AgentKind::Optimizer => VerdictKind::Optimizer,
                    _ => VerdictKind::Checker,
                },
                screened: false,
            },
            Err(e) => return Err(e.to_string()),
        };
        self.note(SessionEvent::Verdict {
            agent,
            round,
            pass: v.pass,
            screened: v.screened,
            explanation: v.explanation.clone(),
        });
        Ok(v)
    }

    fn interaction_loop(&mut self, f: Option<&KeyFieldSet>, hints: &RepairHints) -> Accepted {
        let bug = self.req.bug;
        let (bug_id, run, temp) = (self.req.bug_id, self.req.run, self.cfg.temperature);
        let mut repairer = AgentSession::new(AgentKind::Repairer, temp, bug_id, run);
        let mut checker = AgentSession::new(AgentKind::Checker, temp, bug_id, run);
        let mut optimizer = AgentSession::new(AgentKind::Optimizer, temp, bug_id, run);

        let mut prompt = match build_initial_repairer_prompt(bug, hints, self.templates) {
            Ok(p) => p,
            Err(e) => {
                self.note(SessionEvent::PromptSkipped {
                    reason: e.to_string(),
                });
                return Accepted::No(e.to_string());
            }
        };
        let format_error = self
            .templates
            .get("format_error")
            .expect("bundled template")
            .to_string();
        let mut unusable = 0;
        let mut crashing = 0;
        let mut last_reviewed: Option<String> = None;

        for round in 1..=self.cfg.loop_budget {
            if self.out_of_time() {
                return Accepted::No("time budget exceeded".into());
            }
            self.rounds_used = round;
            let sent = std::mem::take(&mut prompt);
            let backend = self.backend;
            let proposal: RepairProposal =
                match self.ask(AgentKind::Repairer, round, &mut repairer, |s| {
                    repairer_step(s, sent, round, backend)
                }) {
                    Ok(p) => p,
                    Err(e) => return Accepted::No(e.to_string()),
                };
            let candidate = proposal
                .extracted_element
                .as_ref()
                .and_then(|el| diff_to_patch(&bug.document, &bug.locator, el).ok())
                .and_then(|patch| {
                    apply_patch(&bug.document, &patch)
                        .ok()
                        .map(|doc| (patch, doc))
                });
            self.note(SessionEvent::Proposal {
                round,
                extracted: candidate.is_some(),
            });
            let Some((patch, doc)) = candidate else {
                unusable += 1;
                if unusable >= MAX_CONSECUTIVE_FAILURES {
                    return Accepted::No(format!("{unusable} unusable Repairer replies in a row"));
                }
                prompt = format_error.clone();
                continue;
            };
            unusable = 0;

            if self.out_of_time() {
                return Accepted::No("time budget exceeded".into());
            }
            let (kb, templates) = (self.kb, self.templates);
            let checked = self.ask(AgentKind::Checker, round, &mut checker, |s| {
                checker_step(s, bug, &proposal, round, backend, kb, templates)
            });
            let v = match self.verdict(AgentKind::Checker, round, checked) {
                Ok(v) => v,
                Err(e) => return Accepted::No(e),
            };
            if !v.pass {
                prompt = v.explanation;
                continue;
            }

            if self.out_of_time() {
                return Accepted::No("time budget exceeded".into());
            }
            let optimized = self.ask(AgentKind::Optimizer, round, &mut optimizer, |s| {
                optimizer_step(s, bug, &proposal, round, backend, kb, templates)
            });
            let v = match self.verdict(AgentKind::Optimizer, round, optimized) {
                Ok(v) => v,
                Err(e) => return Accepted::No(e),
            };
            if !v.pass {
                prompt = v.explanation;
                continue;
            }

            let fs = match fitness_score(&doc, bug, f, self.kb) {
                Err(FitnessError::FitnessInapplicable(why)) => {
                    self.note(SessionEvent::Fitness {
                        round,
                        score: None,
                        consistent: false,
                        crash: None,
                        inapplicable: Some(why),
                    });
                    return Accepted::Yes(OutcomeKind::FitnessInapplicableAccept, doc, patch, None);
                }
                Ok(fs) => fs,
            };
            self.note(SessionEvent::Fitness {
                round,
                score: Some(fs.score),
                consistent: fs.cross_level_consistent,
                crash: fs.crash.clone(),
                inapplicable: None,
            });
            if fs.accepted() {
                return Accepted::Yes(OutcomeKind::LlmConverged, doc, patch, Some(fs));
            }
            let canonical = serialize_canonical(&doc);
            if last_reviewed.as_deref() == Some(canonical.as_str()) {
                return Accepted::Yes(OutcomeKind::TwiceConsecutiveAccept, doc, patch, Some(fs));
            }
            last_reviewed = Some(canonical);
            crashing = if fs.crashed { crashing + 1 } else { 0 };
            if crashing >= MAX_CONSECUTIVE_FAILURES {
                return Accepted::No(format!("{crashing} crashing proposals in a row"));
            }
            prompt = match fitness_feedback(&fs, self.cfg.feedback, bug, self.templates) {
                Ok(p) => p,
                Err(e) => return Accepted::No(e.to_string()),
            };
            self.note(SessionEvent::Feedback {
                round,
                content: prompt.clone(),
            });
        }
        Accepted::No(format!(
            "loop budget of {} rounds used up",
            self.cfg.loop_budget
        ))
    }
}

fn scored_edit(p: &CandidatePatch) -> ScoredEdit {
    ScoredEdit {
        patch: p.patch.to_string(),
        score: p.fitness.score,
        consistent: p.fitness.cross_level_consistent,
        crashed: p.fitness.crashed,
    }
}
