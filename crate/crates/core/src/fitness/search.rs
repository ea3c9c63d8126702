use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fitness_score, CompatBug, FitnessScore, KeyFieldSet};
use crate::kb::KnowledgeBase;
use crate::xml::{apply_patch, AttrName, Edit, Patch};

/// Fitness evaluations allowed per candidate attribute.
pub const DEFAULT_SEARCH_BUDGET: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriedValue {
    pub value: String,
    pub fitness: FitnessScore,
}

/// A single one-line patch: one issue-inducing attribute replaced by a
/// candidate (or given a new value), or removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePatch {
    pub patch: Patch,
    pub fitness: FitnessScore,
    /// The attribute the patch writes; for removals, the removed attribute.
    pub attr: AttrName,
    /// The issue-inducing attribute the patch replaces or removes.
    pub replaces: AttrName,
    /// `None` for removals.
    pub chosen_value: Option<String>,
    /// Every value evaluated for this candidate, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tried: Vec<TriedValue>,
}

impl CandidatePatch {
    pub fn is_removal(&self) -> bool {
        self.chosen_value.is_none()
    }
}

struct Slot {
    replaces: AttrName,
    attr: AttrName,
    removal: bool,
}

/// For each issue-inducing attribute (in name order): each of its KB
/// candidates, then its removal. Every candidate's value domain is walked in
/// its documented order for at most `budget` evaluations and the best value
/// is kept (see [`FitnessScore::rank_cmp`]; earlier values win ties).
/// Candidates the KB does not declare for the element's tag are skipped.
pub fn search_single_line_patches(
    bug: &CompatBug,
    key_fields: &KeyFieldSet,
    candidates: &[AttrName],
    kb: &KnowledgeBase,
    budget: usize,
) -> Vec<CandidatePatch> {
    let budget = budget.max(1);
    let mut slots = Vec::new();
    for a in &bug.issue_attrs {
        let own = kb.candidate_attributes(a);
        for c in candidates.iter().filter(|c| own.contains(c)) {
            slots.push(Slot {
                replaces: a.clone(),
                attr: c.clone(),
                removal: false,
            });
        }
        slots.push(Slot {
            replaces: a.clone(),
            attr: a.clone(),
            removal: true,
        });
    }
    // evaluated in parallel; collect keeps slot order
    slots
        .par_iter()
        .filter_map(|slot| evaluate_slot(bug, key_fields, kb, slot, budget))
        .collect()
}

fn evaluate_slot(
    bug: &CompatBug,
    key_fields: &KeyFieldSet,
    kb: &KnowledgeBase,
    slot: &Slot,
    budget: usize,
) -> Option<CandidatePatch> {
    let target = bug.path_locator();
    let el = bug.element();
    let fitness_of = |patch: &Patch| {
        let doc = apply_patch(&bug.document, patch).expect("one-line patches apply");
        fitness_score(&doc, bug, Some(key_fields), kb).expect("attribute edits keep the element")
    };
    if slot.removal {
        let patch = Patch::single(Edit::RemoveAttr {
            target,
            name: slot.replaces.clone(),
        });
        let fitness = fitness_of(&patch);
        return Some(CandidatePatch {
            patch,
            fitness,
            attr: slot.attr.clone(),
            replaces: slot.replaces.clone(),
            chosen_value: None,
            tried: Vec::new(),
        });
    }
    let spec = kb.spec_for(&el.tag, &slot.attr)?;
    let original = el.attr(&slot.replaces).unwrap_or_default();
    let mut best: Option<CandidatePatch> = None;
    let mut tried = Vec::new();
    for value in spec
        .domain
        .enumerate(original, kb.resources())
        .into_iter()
        .take(budget)
    {
        let edit = if slot.attr == slot.replaces {
            Edit::SetAttr {
                target: target.clone(),
                name: slot.attr.clone(),
                value: value.clone(),
            }
        } else {
            Edit::ReplaceAttr {
                target: target.clone(),
                old: slot.replaces.clone(),
                new: slot.attr.clone(),
                value: value.clone(),
            }
        };
        let patch = Patch::single(edit);
        let fitness = fitness_of(&patch);
        tried.push(TriedValue {
            value: value.clone(),
            fitness: fitness.clone(),
        });
        if best
            .as_ref()
            .is_none_or(|b| fitness.rank_cmp(&b.fitness).is_gt())
        {
            best = Some(CandidatePatch {
                patch,
                fitness,
                attr: slot.attr.clone(),
                replaces: slot.replaces.clone(),
                chosen_value: Some(value),
                tried: Vec::new(),
            });
        }
    }
    best.map(|mut b| {
        b.tried = tried;
        b
    })
}

/// First patch, in search order, with score 1 that is consistent across the
/// conflicting levels and does not crash.
pub fn find_strategy1(patches: &[CandidatePatch]) -> Option<&CandidatePatch> {
    patches.iter().find(|p| p.fitness.accepted())
}
