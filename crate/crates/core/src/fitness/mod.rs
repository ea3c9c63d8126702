//! Fitness-guided repair: key-field identification, the fitness score,
//! single one-line patch search and score-weighted patch combination.

mod sample;
mod search;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{render, ApiLevel, CrashReason, KnowledgeBase, RenderState, Scalar};
use crate::xml::{apply_patch, AttrName, Edit, ElementLocator, Patch, XmlElement};

pub use sample::{
    combine, inclusion_probabilities, resolve_conflicts, sample_combined_patches, CombinedPatch,
};
pub use search::{
    find_strategy1, search_single_line_patches, CandidatePatch, TriedValue, DEFAULT_SEARCH_BUDGET,
};

/// Added to the denominator of the numeric field distance.
pub const NUMERIC_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BugError {
    #[error("invalid bug: {0}")]
    Invalid(String),
}

/// A configuration compatibility bug: the element `locator` points at
/// behaves differently at `conflicting_levels.0` and `.1` because of
/// `issue_attrs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatBug {
    pub document: XmlElement,
    pub locator: ElementLocator,
    pub issue_attrs: Vec<AttrName>,
    pub conflicting_levels: (ApiLevel, ApiLevel),
    pub target_level: ApiLevel,
}

impl CompatBug {
    pub fn new(
        document: XmlElement,
        locator: ElementLocator,
        issue_attrs: Vec<AttrName>,
        conflicting_levels: (ApiLevel, ApiLevel),
        target_level: ApiLevel,
    ) -> Result<Self, BugError> {
        let mut issue_attrs = issue_attrs;
        issue_attrs.sort();
        issue_attrs.dedup();
        let bug = Self {
            document,
            locator,
            issue_attrs,
            conflicting_levels,
            target_level,
        };
        bug.validate()?;
        Ok(bug)
    }

    pub fn validate(&self) -> Result<(), BugError> {
        let bad = |s: String| Err(BugError::Invalid(s));
        if self.issue_attrs.is_empty() {
            return bad("no issue-inducing attributes".into());
        }
        let Some(el) = self.locator.find(&self.document) else {
            return bad(format!("locator {} does not resolve", self.locator));
        };
        for a in &self.issue_attrs {
            if !el.has_attr(a) {
                return bad(format!("<{}> has no {a}", el.tag));
            }
        }
        let (l, h) = self.conflicting_levels;
        if h.0 != l.0 + 1 {
            return bad(format!("conflicting levels ({l}, {h}) are not adjacent"));
        }
        if h > self.target_level {
            return bad(format!("target level {} is below {h}", self.target_level));
        }
        Ok(())
    }

    /// The issue-inducing element.
    pub fn element(&self) -> &XmlElement {
        self.locator.find(&self.document).expect("validated bug")
    }

    pub fn element_indices(&self) -> Vec<usize> {
        self.locator.resolve(&self.document).expect("validated bug")
    }

    /// Path locator for the issue-inducing element; used by generated edits.
    pub fn path_locator(&self) -> ElementLocator {
        ElementLocator::from_indices(&self.document, &self.element_indices())
            .expect("validated bug")
    }

    /// The document with every issue-inducing attribute removed.
    pub fn stripped(&self) -> XmlElement {
        let target = self.path_locator();
        let patch = Patch {
            edits: self
                .issue_attrs
                .iter()
                .map(|a| Edit::RemoveAttr {
                    target: target.clone(),
                    name: a.clone(),
                })
                .collect(),
        };
        apply_patch(&self.document, &patch).expect("removal always applies")
    }

    pub fn levels(&self) -> [ApiLevel; 3] {
        [
            self.conflicting_levels.0,
            self.conflicting_levels.1,
            self.target_level,
        ]
    }
}

/// One rendered field: element key plus field name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FieldKey {
    pub element: String,
    pub field: String,
}

impl fmt::Display for FieldKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.element, self.field)
    }
}

impl FieldKey {
    pub fn lookup<'a>(&self, state: &'a RenderState) -> Option<&'a Scalar> {
        state.get(&self.element, &self.field)
    }
}

/// The key fields F: fields whose values at the target level change when the
/// issue-inducing attributes are removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyFieldSet {
    pub fields: Vec<FieldKey>,
    /// Values in the buggy app at the target level.
    pub baseline: Vec<Scalar>,
    /// Values in the stripped app at the target level.
    pub stripped_baseline: Vec<Scalar>,
    /// FDiff(app', app); strictly positive.
    pub denominator: f64,
}

impl KeyFieldSet {
    pub fn baseline_of(&self, key: &FieldKey) -> Option<&Scalar> {
        self.fields
            .iter()
            .position(|f| f == key)
            .map(|i| &self.baseline[i])
    }
}

/// Result of key-field identification. Candidates are returned even when no
/// key field was found so they can still guide the agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyFieldOutcome {
    pub key_fields: Option<KeyFieldSet>,
    pub candidates: Vec<AttrName>,
}

pub fn identify_key_fields(bug: &CompatBug, kb: &KnowledgeBase) -> KeyFieldOutcome {
    let mut candidates = Vec::new();
    for a in &bug.issue_attrs {
        for c in kb.candidate_attributes(a) {
            if !candidates.contains(&c) {
                candidates.push(c);
            }
        }
    }
    let app = render(&bug.document, bug.target_level, kb);
    let stripped = render(&bug.stripped(), bug.target_level, kb);
    let mut keys: Vec<FieldKey> = app
        .keys()
        .chain(stripped.keys())
        .map(|(e, f)| FieldKey {
            element: e.to_string(),
            field: f.to_string(),
        })
        .collect();
    keys.sort();
    keys.dedup();
    let fields: Vec<FieldKey> = keys
        .into_iter()
        .filter(|k| k.lookup(&app) != k.lookup(&stripped))
        .collect();
    let key_fields = if fields.is_empty() {
        None
    } else {
        let value = |s: &RenderState, k: &FieldKey| k.lookup(s).cloned().unwrap_or_default();
        let baseline = fields.iter().map(|k| value(&app, k)).collect();
        let stripped_baseline = fields.iter().map(|k| value(&stripped, k)).collect();
        let denominator = fdiff(&stripped, &app, &fields);
        Some(KeyFieldSet {
            fields,
            baseline,
            stripped_baseline,
            denominator,
        })
    };
    KeyFieldOutcome {
        key_fields,
        candidates,
    }
}

/// Distance between two values of one field: 0 when equal, the symmetric
/// relative difference for two numbers, 1 otherwise (including missing).
pub fn field_distance(a: Option<&Scalar>, b: Option<&Scalar>) -> f64 {
    match (a, b) {
        (Some(Scalar::Number(x)), Some(Scalar::Number(y))) => {
            if x == y {
                0.0
            } else {
                (x - y).abs() / (x.abs() + y.abs() + NUMERIC_EPSILON)
            }
        }
        (Some(x), Some(y)) if x == y => 0.0,
        _ => 1.0,
    }
}

/// Sum of per-field distances over `fields`.
pub fn fdiff(a: &RenderState, b: &RenderState, fields: &[FieldKey]) -> f64 {
    fields
        .iter()
        .map(|k| field_distance(k.lookup(a), k.lookup(b)))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDiff {
    pub field: FieldKey,
    /// Repaired app at the target level.
    pub repaired: Scalar,
    /// Buggy app at the target level.
    pub original: Scalar,
    /// Repaired app at the two conflicting levels.
    pub repaired_low: Scalar,
    pub repaired_high: Scalar,
}

impl FieldDiff {
    pub fn differs(&self) -> bool {
        self.repaired != self.original || self.repaired_low != self.repaired_high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessScore {
    pub score: f64,
    pub cross_level_consistent: bool,
    pub crashed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crash: Option<CrashReason>,
    pub per_field_diffs: Vec<FieldDiff>,
}

impl FitnessScore {
    /// Score 1, consistent across the conflicting levels, no crash.
    pub fn accepted(&self) -> bool {
        self.score == 1.0 && self.cross_level_consistent && !self.crashed
    }

    /// Ordering used to pick the better of two patches: not crashing beats
    /// crashing, then consistency, then score.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        (!self.crashed)
            .cmp(&!other.crashed)
            .then(
                self.cross_level_consistent
                    .cmp(&other.cross_level_consistent),
            )
            .then(self.score.total_cmp(&other.score))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FitnessError {
    #[error("fitness inapplicable: {0}")]
    FitnessInapplicable(String),
}

/// Fitness of a repaired document.
///
/// `score = 1 - FDiff(app_rc, app) / FDiff(app', app)` over the key fields at
/// the target level. Consistency compares the repaired app at the two
/// conflicting levels over the key fields; a crash at any of the three
/// levels marks the patch as crashed.
pub fn fitness_score(
    app_rc: &XmlElement,
    bug: &CompatBug,
    key_fields: Option<&KeyFieldSet>,
    kb: &KnowledgeBase,
) -> Result<FitnessScore, FitnessError> {
    let f = key_fields.ok_or_else(|| FitnessError::FitnessInapplicable("no key fields".into()))?;
    check_same_element(app_rc, bug)?;
    let [low, high, target] = bug.levels();
    let rc_t = render(app_rc, target, kb);
    let rc_l = render(app_rc, low, kb);
    let rc_h = render(app_rc, high, kb);

    let mut numerator = 0.0;
    let mut consistent = true;
    let mut diffs = Vec::with_capacity(f.fields.len());
    for (k, original) in f.fields.iter().zip(&f.baseline) {
        let repaired = k.lookup(&rc_t);
        numerator += field_distance(repaired, Some(original));
        let (lv, hv) = (k.lookup(&rc_l), k.lookup(&rc_h));
        if field_distance(lv, hv) != 0.0 {
            consistent = false;
        }
        diffs.push(FieldDiff {
            field: k.clone(),
            repaired: repaired.cloned().unwrap_or_default(),
            original: original.clone(),
            repaired_low: lv.cloned().unwrap_or_default(),
            repaired_high: hv.cloned().unwrap_or_default(),
        });
    }
    let crash = rc_l
        .first_crash()
        .or(rc_h.first_crash())
        .or(rc_t.first_crash())
        .cloned();
    Ok(FitnessScore {
        score: 1.0 - numerator / f.denominator,
        cross_level_consistent: consistent,
        crashed: crash.is_some(),
        crash,
        per_field_diffs: diffs,
    })
}

/// The issue-inducing element must still be there, with the same tag and
/// the same chain of ancestor tags; replacing or wrapping it makes the key
/// fields meaningless.
fn check_same_element(app_rc: &XmlElement, bug: &CompatBug) -> Result<(), FitnessError> {
    let inapplicable = |s: &str| Err(FitnessError::FitnessInapplicable(s.to_string()));
    let Some(ix) = bug.locator.resolve(app_rc) else {
        return inapplicable("the issue-inducing element is gone");
    };
    let tags = |root: &XmlElement, ix: &[usize]| -> Vec<String> {
        (0..=ix.len())
            .map(|n| {
                root.descendant(&ix[..n])
                    .expect("prefix resolves")
                    .tag
                    .clone()
            })
            .collect()
    };
    let before = tags(&bug.document, &bug.element_indices());
    if tags(app_rc, &ix) != before {
        return inapplicable("the issue-inducing element was replaced or wrapped");
    }
    Ok(())
}

/// Convenience: render the three levels the fitness score looks at.
pub fn render_levels(
    doc: &XmlElement,
    bug: &CompatBug,
    kb: &KnowledgeBase,
) -> BTreeMap<ApiLevel, RenderState> {
    bug.levels()
        .into_iter()
        .map(|l| (l, render(doc, l, kb)))
        .collect()
}
