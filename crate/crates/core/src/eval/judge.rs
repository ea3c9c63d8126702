use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fitness::{identify_key_fields, CompatBug, FieldKey};
use crate::kb::{render, CrashKind, KnowledgeBase, RenderState};
use crate::xml::{canonical_equal, XmlElement};

/// Why a run failed. Assigned by the first matching rule, in declaration
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureCategory {
    /// A reference to a missing resource breaks the build.
    #[serde(rename = "C-R")]
    UnresolvedResource,
    /// An unknown attribute or an invalid value breaks the build.
    #[serde(rename = "C-A")]
    InvalidAttribute,
    /// The layout builds but an element cannot be inflated.
    #[serde(rename = "I-A")]
    BrokenStructure,
    /// The issue-inducing attributes were left alone.
    #[serde(rename = "N-I")]
    NoRepair,
    /// An issue-inducing attribute got a new value that does not help.
    #[serde(rename = "U-I")]
    ValueUpdate,
    /// Issue-inducing attributes were removed or replaced without keeping
    /// the original behavior.
    #[serde(rename = "R-I")]
    Removal,
}

impl FailureCategory {
    pub const ALL: [FailureCategory; 6] = [
        FailureCategory::UnresolvedResource,
        FailureCategory::InvalidAttribute,
        FailureCategory::BrokenStructure,
        FailureCategory::NoRepair,
        FailureCategory::ValueUpdate,
        FailureCategory::Removal,
    ];

    pub fn code(self) -> &'static str {
        match self {
            FailureCategory::UnresolvedResource => "C-R",
            FailureCategory::InvalidAttribute => "C-A",
            FailureCategory::BrokenStructure => "I-A",
            FailureCategory::NoRepair => "N-I",
            FailureCategory::ValueUpdate => "U-I",
            FailureCategory::Removal => "R-I",
        }
    }
}

impl fmt::Display for FailureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "category", rename_all = "snake_case")]
pub enum Judgment {
    Correct,
    Overfitting,
    Failed(FailureCategory),
}

impl fmt::Display for Judgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Judgment::Correct => f.write_str("correct"),
            Judgment::Overfitting => f.write_str("overfitting"),
            Judgment::Failed(c) => write!(f, "failed({c})"),
        }
    }
}

/// The facts a judgment is derived from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeFacts {
    /// Every field of every element matches the buggy app at the target level.
    pub same_at_target: bool,
    /// Every field of every element agrees between the conflicting levels.
    pub consistent: bool,
    /// First crash kind at any of the three levels.
    pub crash: Option<CrashKind>,
    pub unchanged: bool,
    /// Fields that differ from the buggy app at the target level; all of
    /// them are outside the key fields.
    pub only_non_key_fields_differ: bool,
    /// The issue-inducing element still carries every issue-inducing
    /// attribute with its original value.
    pub issue_attrs_untouched: bool,
    /// Some issue-inducing attribute is still there with another value.
    pub issue_attr_value_changed: bool,
}

impl JudgeFacts {
    pub fn collect(doc: &XmlElement, bug: &CompatBug, kb: &KnowledgeBase) -> Self {
        let [low, high, target] = bug.levels();
        let rc_l = render(doc, low, kb);
        let rc_h = render(doc, high, kb);
        let rc_t = render(doc, target, kb);
        let app_t = render(&bug.document, target, kb);
        let crash = [&rc_l, &rc_h, &rc_t]
            .into_iter()
            .find_map(|s| s.first_crash())
            .map(|c| c.kind);

        let key: Vec<FieldKey> = identify_key_fields(bug, kb)
            .key_fields
            .map(|f| f.fields)
            .unwrap_or_default();
        let differing = differing_fields(&rc_t, &app_t);
        let only_non_key_fields_differ =
            !differing.is_empty() && differing.iter().all(|k| !key.contains(k));

        let original = bug.element();
        let element = bug.locator.find(doc);
        let issue_attrs_untouched = element.is_some_and(|el| {
            bug.issue_attrs
                .iter()
                .all(|a| el.attr(a).is_some() && el.attr(a) == original.attr(a))
        });
        let issue_attr_value_changed = element.is_some_and(|el| {
            bug.issue_attrs
                .iter()
                .any(|a| el.attr(a).is_some_and(|v| Some(v) != original.attr(a)))
        });

        Self {
            same_at_target: rc_t.elements == app_t.elements,
            consistent: rc_l.elements == rc_h.elements,
            crash,
            unchanged: canonical_equal(doc, &bug.document),
            only_non_key_fields_differ,
            issue_attrs_untouched,
            issue_attr_value_changed,
        }
    }

    pub fn judgment(&self) -> Judgment {
        if self.same_at_target && self.consistent && self.crash.is_none() {
            return Judgment::Correct;
        }
        let runtime_crash = self.crash.is_some_and(|k| !k.at_compile_time());
        let compile_crash = self.crash.is_some_and(|k| k.at_compile_time());
        if self.consistent
            && !self.unchanged
            && !compile_crash
            && (runtime_crash || self.only_non_key_fields_differ)
        {
            return Judgment::Overfitting;
        }
        Judgment::Failed(self.failure_category())
    }

    /// Category of a run that is neither correct nor overfitting.
    pub fn failure_category(&self) -> FailureCategory {
        match self.crash {
            Some(CrashKind::UnresolvedResource) => FailureCategory::UnresolvedResource,
            Some(CrashKind::UnknownAttribute | CrashKind::InvalidValue) => {
                FailureCategory::InvalidAttribute
            }
            Some(CrashKind::UnknownElement) => FailureCategory::BrokenStructure,
            None if self.unchanged || self.issue_attrs_untouched => FailureCategory::NoRepair,
            None if self.issue_attr_value_changed => FailureCategory::ValueUpdate,
            None => FailureCategory::Removal,
        }
    }
}

fn differing_fields(a: &RenderState, b: &RenderState) -> Vec<FieldKey> {
    let mut keys: Vec<FieldKey> = a
        .keys()
        .chain(b.keys())
        .map(|(e, f)| FieldKey {
            element: e.to_string(),
            field: f.to_string(),
        })
        .collect();
    keys.sort();
    keys.dedup();
    keys.retain(|k| k.lookup(a) != k.lookup(b));
    keys
}

/// Judges a repaired document against the bug it was meant to fix, by
/// rendering it at the conflicting levels and the target level.
pub fn judge(doc: &XmlElement, bug: &CompatBug, kb: &KnowledgeBase) -> Judgment {
    JudgeFacts::collect(doc, bug, kb).judgment()
}
