use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use super::AgentError;
use crate::fitness::{CandidatePatch, CompatBug};
use crate::xml::{serialize_canonical, AttrName};

/// Upper bound on the estimated size of the Repairer's first prompt.
pub const PROMPT_TOKEN_BUDGET: usize = 1000;

const BUNDLED: &[(&str, &str)] = &[
    (
        "background",
        include_str!("../../assets/prompts/background.txt"),
    ),
    ("rules", include_str!("../../assets/prompts/rules.txt")),
    ("bug", include_str!("../../assets/prompts/bug.txt")),
    (
        "repairer_initial",
        include_str!("../../assets/prompts/repairer_initial.txt"),
    ),
    (
        "no_candidates",
        include_str!("../../assets/prompts/no_candidates.txt"),
    ),
    (
        "format_error",
        include_str!("../../assets/prompts/format_error.txt"),
    ),
    (
        "checker_system",
        include_str!("../../assets/prompts/checker_system.txt"),
    ),
    (
        "checker_request",
        include_str!("../../assets/prompts/checker_request.txt"),
    ),
    (
        "optimizer_system",
        include_str!("../../assets/prompts/optimizer_system.txt"),
    ),
    (
        "optimizer_request",
        include_str!("../../assets/prompts/optimizer_request.txt"),
    ),
    (
        "coarse_feedback",
        include_str!("../../assets/prompts/coarse_feedback.txt"),
    ),
    (
        "fine_feedback",
        include_str!("../../assets/prompts/fine_feedback.txt"),
    ),
    (
        "crash_feedback",
        include_str!("../../assets/prompts/crash_feedback.txt"),
    ),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unknown template `{0}`")]
    Unknown(String),
    #[error("template `{template}` uses `{{{{{placeholder}}}}}`, which has no value")]
    Unfilled {
        template: String,
        placeholder: String,
    },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

/// Prompt texts with `{{name}}` placeholders. The bundled set can be
/// overridden file by file from a directory of `<template>.txt` files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    texts: BTreeMap<String, String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::bundled()
    }
}

impl PromptTemplates {
    pub fn bundled() -> Self {
        Self {
            texts: BUNDLED
                .iter()
                .map(|(k, v)| (k.to_string(), v.trim_end().to_string()))
                .collect(),
        }
    }

    /// Bundled templates with every `<name>.txt` found in `dir` replacing
    /// the template of that name. Files with other names are ignored.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        if !dir.is_dir() {
            return Err(TemplateError::Io {
                path: dir.display().to_string(),
                reason: "not a directory".into(),
            });
        }
        let mut t = Self::bundled();
        let names: Vec<String> = t.texts.keys().cloned().collect();
        for name in names {
            let path = dir.join(format!("{name}.txt"));
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            t.texts.insert(name, text.trim_end().to_string());
        }
        Ok(t)
    }

    pub fn get(&self, name: &str) -> Result<&str, TemplateError> {
        self.texts
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| TemplateError::Unknown(name.to_string()))
    }

    /// Fills every `{{key}}` of the template in one pass; values are not
    /// scanned for placeholders themselves.
    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
        let text = self.get(name)?;
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            match after.find("}}") {
                Some(end) if is_placeholder(&after[..end]) => {
                    let key = &after[..end];
                    let value = vars
                        .iter()
                        .find(|(k, _)| *k == key)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| TemplateError::Unfilled {
                            template: name.to_string(),
                            placeholder: key.to_string(),
                        })?;
                    out.push_str(value);
                    rest = &after[end + 2..];
                }
                _ => {
                    out.push_str("{{");
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

fn is_placeholder(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Rough token count: each run of letters, digits and underscores costs one
/// token per started four characters, every other non-space character costs
/// one.
pub fn estimate_tokens(text: &str) -> usize {
    let mut tokens = 0;
    let mut run: usize = 0;
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            run += 1;
            continue;
        }
        tokens += run.div_ceil(4);
        run = 0;
        if !c.is_whitespace() {
            tokens += 1;
        }
    }
    tokens + run.div_ceil(4)
}

/// Candidate repair information handed to the Repairer.
#[derive(Debug, Clone, PartialEq)]
pub enum RepairHints {
    /// Attributes that may fix the issue; used when no key field was found.
    CandidateAttributes(Vec<AttrName>),
    /// Scored one-line patches from the search.
    ScoredPatches(Vec<CandidatePatch>),
}

impl RepairHints {
    /// One line per entry, most promising first.
    pub fn lines(&self) -> Vec<String> {
        match self {
            RepairHints::CandidateAttributes(attrs) => attrs
                .iter()
                .map(|a| format!("- candidate attribute {a}"))
                .collect(),
            RepairHints::ScoredPatches(patches) => {
                let mut sorted: Vec<&CandidatePatch> = patches.iter().collect();
                sorted.sort_by(|a, b| b.fitness.rank_cmp(&a.fitness));
                sorted
                    .into_iter()
                    .map(|p| {
                        let f = &p.fitness;
                        let mut line = format!(
                            "- {}: score {:.2}, same on both conflicting levels: {}",
                            p.patch
                                .edits
                                .first()
                                .map(ToString::to_string)
                                .unwrap_or_default(),
                            f.score,
                            if f.cross_level_consistent {
                                "yes"
                            } else {
                                "no"
                            }
                        );
                        if let Some(c) = &f.crash {
                            line.push_str(&format!(", fails: {c}"));
                        }
                        line
                    })
                    .collect()
            }
        }
    }
}

/// The bug section shared by all agents' prompts.
pub fn describe_bug(bug: &CompatBug, templates: &PromptTemplates) -> Result<String, TemplateError> {
    let element = serialize_canonical(bug.element());
    let attrs: Vec<String> = bug.issue_attrs.iter().map(ToString::to_string).collect();
    let (low, high) = bug.conflicting_levels;
    templates.render(
        "bug",
        &[
            ("element", element.trim_end()),
            ("issue_attrs", &attrs.join(", ")),
            ("low", &low.to_string()),
            ("high", &high.to_string()),
            ("target", &bug.target_level.to_string()),
        ],
    )
}

/// First Repairer prompt. Lower-ranked candidate entries are dropped until
/// the prompt fits [`PROMPT_TOKEN_BUDGET`].
pub fn build_initial_repairer_prompt(
    bug: &CompatBug,
    hints: &RepairHints,
    templates: &PromptTemplates,
) -> Result<String, AgentError> {
    let element_tokens = estimate_tokens(&serialize_canonical(bug.element()));
    if element_tokens > PROMPT_TOKEN_BUDGET {
        return Err(AgentError::PromptTooLong {
            tokens: element_tokens,
            budget: PROMPT_TOKEN_BUDGET,
        });
    }
    let bug_text = describe_bug(bug, templates)?;
    let lines = hints.lines();
    let mut keep = lines.len();
    loop {
        let hints_text = if lines.is_empty() {
            templates.get("no_candidates")?.to_string()
        } else {
            let mut t = lines[..keep].join("\n");
            if keep < lines.len() {
                if keep > 0 {
                    t.push('\n');
                }
                t.push_str(&format!(
                    "({} more candidates left out)",
                    lines.len() - keep
                ));
            }
            t
        };
        let prompt = templates.render(
            "repairer_initial",
            &[
                ("background", templates.get("background")?),
                ("rules", templates.get("rules")?),
                ("bug", &bug_text),
                ("hints", &hints_text),
            ],
        )?;
        let tokens = estimate_tokens(&prompt);
        if tokens <= PROMPT_TOKEN_BUDGET {
            return Ok(prompt);
        }
        if keep == 0 {
            return Err(AgentError::PromptTooLong {
                tokens,
                budget: PROMPT_TOKEN_BUDGET,
            });
        }
        keep -= 1;
    }
}
