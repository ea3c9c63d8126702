//! Attribute knowledge base and the simulated rendering oracle.
//!
//! The knowledge base is a JSON document:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "api_levels": { "min": 21, "max": 31 },
//!   "elements": { "ImageView": { "extends": "View", "defaults": { "mVisibility": "visible" } } },
//!   "attributes": [
//!     { "name": "android:foreground", "applies_to": ["View"], "introduced": 23,
//!       "domain": { "kind": "reference", "types": ["drawable", "color"] },
//!       "effects": [ { "field": "mForeground", "rule": "value", "from": 23 } ] }
//!   ],
//!   "registered_attributes": ["android:id"],
//!   "candidates": { "android:src": ["app:srcCompat"] },
//!   "resources": ["@drawable/ic_play"]
//! }
//! ```
//!
//! Every key is optional; `{}` is a valid, empty knowledge base.

mod render;
mod value;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::xml::AttrName;

pub use render::{render, screen_element, CrashKind, CrashReason, RenderState};
pub use value::{
    needs_resolution, parse_dimension, Scalar, ValueDomain, DIMENSION_GRID, PX_PER_DP,
};

/// The knowledge base shipped with the crate.
pub const BUNDLED_KB: &str = include_str!("../../assets/kb/default.json");

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ApiLevel(pub u8);

impl ApiLevel {
    pub fn next(self) -> Self {
        ApiLevel(self.0 + 1)
    }
}

impl fmt::Display for ApiLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelBounds {
    pub min: ApiLevel,
    pub max: ApiLevel,
}

impl Default for LevelBounds {
    fn default() -> Self {
        Self {
            min: ApiLevel(21),
            max: ApiLevel(31),
        }
    }
}

impl LevelBounds {
    pub fn contains(&self, level: ApiLevel) -> bool {
        self.min <= level && level <= self.max
    }
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("{path}: {reason}")]
    KbSchemaError { path: String, reason: String },
    #[error("inconsistent knowledge base: {0}")]
    KbInconsistent(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extends: Option<String>,
    #[serde(default)]
    pub defaults: BTreeMap<String, Scalar>,
    /// A wrapper whose only job is decoration; see [`render`].
    #[serde(default)]
    pub collapsible_wrapper: bool,
    #[serde(default)]
    pub decoration_fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum EffectRule {
    /// The parsed attribute value itself.
    Value,
    Const {
        value: Scalar,
    },
    /// Looks the parsed token up in `table`.
    Map {
        table: BTreeMap<String, Scalar>,
        #[serde(default)]
        default: Scalar,
    },
    /// Keywords map to a measured size in dp; plain dimensions pass through.
    Measure {
        keywords: BTreeMap<String, f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub field: String,
    #[serde(flatten)]
    pub rule: EffectRule,
    pub from: ApiLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub name: AttrName,
    /// Tags (matched along `extends` chains) or `"*"`.
    #[serde(default = "wildcard")]
    pub applies_to: Vec<String>,
    pub introduced: ApiLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removed: Option<ApiLevel>,
    pub domain: ValueDomain,
    #[serde(default)]
    pub effects: Vec<Effect>,
}

fn wildcard() -> Vec<String> {
    vec!["*".into()]
}

impl AttributeSpec {
    pub fn active_at(&self, level: ApiLevel) -> bool {
        self.introduced <= level && self.removed.is_none_or(|r| level < r)
    }

    /// Effects in force at `level`: per field, the one with the latest
    /// `from` not after `level`.
    pub fn effects_at(&self, level: ApiLevel) -> Vec<&Effect> {
        let mut best: BTreeMap<&str, &Effect> = BTreeMap::new();
        for e in self.effects.iter().filter(|e| e.from <= level) {
            match best.get(e.field.as_str()) {
                Some(prev) if prev.from >= e.from => {}
                _ => {
                    best.insert(&e.field, e);
                }
            }
        }
        best.into_values().collect()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KbFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema_version: Option<u32>,
    #[serde(default)]
    api_levels: LevelBounds,
    #[serde(default)]
    elements: BTreeMap<String, ElementSpec>,
    #[serde(default)]
    attributes: Vec<AttributeSpec>,
    #[serde(default)]
    registered_attributes: Vec<AttrName>,
    #[serde(default)]
    candidates: BTreeMap<AttrName, Vec<AttrName>>,
    #[serde(default)]
    resources: Vec<String>,
}

/// Validated, immutable knowledge base.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    file: KbFile,
    by_name: HashMap<AttrName, Vec<usize>>,
    registered: BTreeSet<AttrName>,
    resources: BTreeSet<String>,
    fields: HashMap<String, BTreeMap<String, Scalar>>,
}

impl KnowledgeBase {
    pub fn load(path: &Path) -> Result<Self, KbError> {
        let text = std::fs::read_to_string(path).map_err(|e| KbError::KbSchemaError {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_KB, "<bundled>").expect("bundled knowledge base is valid")
    }

    /// Parses and validates a KB document; `origin` names it in errors.
    pub fn from_json(text: &str, origin: &str) -> Result<Self, KbError> {
        let file: KbFile = serde_json::from_str(text).map_err(|e| KbError::KbSchemaError {
            path: origin.to_string(),
            reason: e.to_string(),
        })?;
        if let Some(v) = file.schema_version {
            if v != SCHEMA_VERSION {
                return Err(KbError::KbSchemaError {
                    path: origin.to_string(),
                    reason: format!("unsupported schema_version {v} (expected {SCHEMA_VERSION})"),
                });
            }
        }
        Self::build(file)
    }

    fn build(file: KbFile) -> Result<Self, KbError> {
        let bad = |s: String| Err(KbError::KbInconsistent(s));
        if file.api_levels.min > file.api_levels.max {
            return bad(format!(
                "api_levels.min {} exceeds max {}",
                file.api_levels.min, file.api_levels.max
            ));
        }
        for (tag, spec) in &file.elements {
            let mut seen = BTreeSet::from([tag.as_str()]);
            let mut cur = spec;
            while let Some(parent) = &cur.extends {
                if !seen.insert(parent) {
                    return bad(format!("element `{tag}` has a cyclic extends chain"));
                }
                match file.elements.get(parent) {
                    Some(p) => cur = p,
                    None => return bad(format!("element `{tag}` extends unknown `{parent}`")),
                }
            }
            for f in &spec.decoration_fields {
                if !spec.collapsible_wrapper {
                    return bad(format!(
                        "`{tag}` lists decoration field `{f}` but is not a wrapper"
                    ));
                }
            }
        }
        let mut by_name: HashMap<AttrName, Vec<usize>> = HashMap::new();
        for (i, spec) in file.attributes.iter().enumerate() {
            let name = &spec.name;
            if let Some(r) = spec.removed {
                if r < spec.introduced {
                    return bad(format!(
                        "{name}: removed {r} before introduced {}",
                        spec.introduced
                    ));
                }
            }
            for e in &spec.effects {
                if e.from < spec.introduced {
                    return bad(format!(
                        "{name}: effect on `{}` from {} precedes introduction at {}",
                        e.field, e.from, spec.introduced
                    ));
                }
            }
            if spec.applies_to.is_empty() {
                return bad(format!("{name}: empty applies_to"));
            }
            for t in &spec.applies_to {
                if t != "*" && !file.elements.contains_key(t) {
                    return bad(format!("{name}: applies to unknown element `{t}`"));
                }
            }
            match &spec.domain {
                ValueDomain::Enum { values } | ValueDomain::Flags { values }
                    if values.is_empty() =>
                {
                    return bad(format!("{name}: empty value list"));
                }
                ValueDomain::Reference { types } if types.is_empty() => {
                    return bad(format!("{name}: reference domain without types"));
                }
                _ => {}
            }
            by_name.entry(name.clone()).or_default().push(i);
        }
        for (from, targets) in &file.candidates {
            if !by_name.contains_key(from) {
                return bad(format!("candidate rule for undeclared attribute {from}"));
            }
            for t in targets {
                if !by_name.contains_key(t) {
                    return bad(format!(
                        "candidate {t} for {from} is not a declared attribute"
                    ));
                }
            }
        }
        let registered = file.registered_attributes.iter().cloned().collect();
        let resources = file.resources.iter().cloned().collect();
        let mut kb = Self {
            fields: HashMap::new(),
            by_name,
            registered,
            resources,
            file,
        };
        let tags: Vec<String> = kb.file.elements.keys().cloned().collect();
        for tag in tags {
            let f = kb.compute_fields(&tag);
            kb.fields.insert(tag, f);
        }
        Ok(kb)
    }

    pub fn to_json(&self) -> String {
        let mut file = self.file.clone();
        file.schema_version = Some(SCHEMA_VERSION);
        serde_json::to_string_pretty(&file).expect("serializable")
    }

    pub fn levels(&self) -> LevelBounds {
        self.file.api_levels
    }

    pub fn is_known_tag(&self, tag: &str) -> bool {
        self.file.elements.contains_key(tag)
    }

    pub fn element(&self, tag: &str) -> Option<&ElementSpec> {
        self.file.elements.get(tag)
    }

    /// `tag` followed by its `extends` ancestors.
    pub fn tag_chain<'a>(&'a self, tag: &'a str) -> Vec<&'a str> {
        let mut chain = vec![tag];
        let mut cur = tag;
        while let Some(parent) = self
            .file
            .elements
            .get(cur)
            .and_then(|e| e.extends.as_deref())
        {
            chain.push(parent);
            cur = parent;
        }
        chain
    }

    /// Most specific spec for `name` on `tag`: the first tag along the
    /// `extends` chain with a matching spec, then wildcard specs.
    pub fn spec_for(&self, tag: &str, name: &AttrName) -> Option<&AttributeSpec> {
        let specs = self.by_name.get(name)?;
        let on = |t: &str| {
            specs
                .iter()
                .map(|&i| &self.file.attributes[i])
                .find(|s| s.applies_to.iter().any(|a| a == t))
        };
        let mut cur = Some(tag);
        while let Some(t) = cur {
            if let Some(s) = on(t) {
                return Some(s);
            }
            cur = self.file.elements.get(t).and_then(|e| e.extends.as_deref());
        }
        on("*")
    }

    /// Whether the name is declared anywhere: as a spec for any element or
    /// as a registered attribute without render effects.
    pub fn knows_attr(&self, name: &AttrName) -> bool {
        self.by_name.contains_key(name) || self.registered.contains(name)
    }

    pub fn has_spec(&self, name: &AttrName) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn attributes(&self) -> &[AttributeSpec] {
        &self.file.attributes
    }

    /// Replacement attributes worth trying for `name`, most promising first.
    pub fn candidate_attributes(&self, name: &AttrName) -> Vec<AttrName> {
        self.file.candidates.get(name).cloned().unwrap_or_default()
    }

    pub fn is_resolvable(&self, reference: &str) -> bool {
        !needs_resolution(reference) || self.resources.contains(reference)
    }

    pub fn resources(&self) -> &[String] {
        &self.file.resources
    }

    /// Field slots every element of `tag` renders, with their defaults.
    /// Empty for unknown tags.
    pub fn fields_of(&self, tag: &str) -> &BTreeMap<String, Scalar> {
        static NONE: BTreeMap<String, Scalar> = BTreeMap::new();
        self.fields.get(tag).unwrap_or(&NONE)
    }

    fn compute_fields(&self, tag: &str) -> BTreeMap<String, Scalar> {
        let chain = self.tag_chain(tag);
        let mut out = BTreeMap::new();
        for spec in &self.file.attributes {
            if spec
                .applies_to
                .iter()
                .any(|a| a == "*" || chain.contains(&a.as_str()))
            {
                for e in &spec.effects {
                    out.insert(e.field.clone(), Scalar::Unset);
                }
            }
        }
        for t in chain.iter().rev() {
            if let Some(el) = self.file.elements.get(*t) {
                for (k, v) in &el.defaults {
                    out.insert(k.clone(), v.clone());
                }
            }
        }
        out
    }

    /// A copy with one more resource in the registry.
    pub fn with_resource(&self, reference: &str) -> Self {
        let mut file = self.file.clone();
        file.resources.push(reference.to_string());
        Self::build(file).expect("adding a resource keeps the KB valid")
    }
}

impl EffectRule {
    pub fn evaluate(&self, parsed: &Scalar) -> Scalar {
        match self {
            EffectRule::Value => parsed.clone(),
            EffectRule::Const { value } => value.clone(),
            EffectRule::Map { table, default } => match parsed {
                Scalar::Token(t) => table.get(t).cloned().unwrap_or_else(|| default.clone()),
                _ => default.clone(),
            },
            EffectRule::Measure { keywords } => match parsed {
                Scalar::Token(t) => keywords
                    .get(t)
                    .map_or(Scalar::Unset, |n| Scalar::Number(*n)),
                Scalar::Number(n) => Scalar::Number(*n),
                _ => Scalar::Unset,
            },
        }
    }
}
