use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{needs_resolution, ApiLevel, KnowledgeBase, Scalar};
use crate::xml::{AttrName, XmlElement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrashKind {
    /// A reference to an app resource that does not exist (fails to link).
    UnresolvedResource,
    /// An attribute the framework does not declare (fails to compile).
    UnknownAttribute,
    /// A value outside the attribute's domain (fails to compile).
    InvalidValue,
    /// A tag the framework cannot inflate (crashes at run time).
    UnknownElement,
}

impl CrashKind {
    pub fn at_compile_time(self) -> bool {
        self != CrashKind::UnknownElement
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashReason {
    pub kind: CrashKind,
    pub element: String,
    pub detail: String,
}

impl fmt::Display for CrashReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            CrashKind::UnresolvedResource => "resource not found",
            CrashKind::UnknownAttribute => "attribute not found",
            CrashKind::InvalidValue => "incompatible attribute value",
            CrashKind::UnknownElement => "cannot inflate element",
        };
        write!(f, "{what} at {}: {}", self.element, self.detail)
    }
}

/// Field values of every rendered element at one API level.
///
/// Elements are keyed by `id/<name>` when their `android:id` is unique in the
/// document, otherwise by their position, e.g. `/LinearLayout/1:ImageView`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderState {
    pub level: ApiLevel,
    pub elements: BTreeMap<String, BTreeMap<String, Scalar>>,
    pub crashes: Vec<CrashReason>,
}

impl RenderState {
    pub fn crashed(&self) -> bool {
        !self.crashes.is_empty()
    }

    pub fn get(&self, element: &str, field: &str) -> Option<&Scalar> {
        self.elements.get(element)?.get(field)
    }

    /// All `(element, field)` pairs in key order.
    pub fn keys(&self) -> impl Iterator<Item = (&str, &str)> {
        self.elements
            .iter()
            .flat_map(|(e, fs)| fs.keys().map(move |f| (e.as_str(), f.as_str())))
    }

    pub fn first_crash(&self) -> Option<&CrashReason> {
        self.crashes.first()
    }
}

struct Rendered<'a> {
    el: &'a XmlElement,
    fields: BTreeMap<String, Scalar>,
    children: Vec<Rendered<'a>>,
}

/// Renders `root` at `level`.
///
/// Each element starts from its tag's field defaults; every attribute active
/// at `level` then applies its effects in force at `level`, in attribute-name
/// order. Problems a build or inflation would hit are recorded as crashes.
///
/// A collapsible wrapper (e.g. a `FrameLayout` with one child, wrap-content
/// size and nothing set besides decoration such as a foreground) is not
/// rendered as an element of its own: its decoration is drawn onto the child,
/// which takes the wrapper's place.
pub fn render(root: &XmlElement, level: ApiLevel, kb: &KnowledgeBase) -> RenderState {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    for el in root.walk() {
        if let Some(id) = el.resource_id() {
            *ids.entry(id).or_default() += 1;
        }
    }
    let mut crashes = Vec::new();
    let tree = build(
        root,
        level,
        kb,
        &ids,
        &format!("/{}", root.tag),
        &mut crashes,
    );
    let mut elements = BTreeMap::new();
    emit(tree, None, 0, kb, &ids, &mut elements);
    RenderState {
        level,
        elements,
        crashes,
    }
}

/// Build-time checks for `el` and its descendants: unknown attributes,
/// unresolvable references and invalid values. Inflation problems (unknown
/// tags) are not reported.
pub fn screen_element(el: &XmlElement, kb: &KnowledgeBase) -> Vec<CrashReason> {
    let mut out = Vec::new();
    for e in el.walk() {
        let label = label_for(e, &HashMap::new(), &e.tag);
        check_attrs(e, &label, kb, &mut out);
    }
    out
}

fn label_for(el: &XmlElement, ids: &HashMap<&str, usize>, path: &str) -> String {
    match el.resource_id() {
        Some(id) if ids.get(id).copied().unwrap_or(1) == 1 => format!("id/{id}"),
        _ => path.to_string(),
    }
}

fn sorted_attrs(el: &XmlElement) -> Vec<(&AttrName, &str)> {
    let mut attrs: Vec<_> = el
        .attributes()
        .filter(|(n, _)| n.prefix() != Some("tools"))
        .collect();
    attrs.sort_by(|a, b| a.0.cmp(b.0));
    attrs
}

/// Records compile-time problems; returns the attributes that passed along
/// with their parsed values.
fn check_attrs<'a>(
    el: &'a XmlElement,
    label: &str,
    kb: &KnowledgeBase,
    crashes: &mut Vec<CrashReason>,
) -> Vec<(&'a AttrName, Scalar)> {
    let mut ok = Vec::new();
    for (name, value) in sorted_attrs(el) {
        let crash = |kind, detail: String| CrashReason {
            kind,
            element: label.to_string(),
            detail,
        };
        if !kb.knows_attr(name) {
            crashes.push(crash(CrashKind::UnknownAttribute, format!("{name}")));
            continue;
        }
        let parsed = match kb
            .spec_for(&el.tag, name)
            .map(|spec| spec.domain.parse(value))
        {
            Some(Err(why)) => {
                crashes.push(crash(CrashKind::InvalidValue, format!("{name}: {why}")));
                continue;
            }
            Some(Ok(parsed)) => Some(parsed),
            None => None,
        };
        if needs_resolution(value) && !kb.is_resolvable(value) {
            crashes.push(crash(
                CrashKind::UnresolvedResource,
                format!("{name}=\"{value}\""),
            ));
            continue;
        }
        if let Some(parsed) = parsed {
            ok.push((name, parsed));
        }
    }
    ok
}

fn build<'a>(
    el: &'a XmlElement,
    level: ApiLevel,
    kb: &KnowledgeBase,
    ids: &HashMap<&str, usize>,
    path: &str,
    crashes: &mut Vec<CrashReason>,
) -> Rendered<'a> {
    let label = label_for(el, ids, path);
    if !kb.is_known_tag(&el.tag) {
        crashes.push(CrashReason {
            kind: CrashKind::UnknownElement,
            element: label.clone(),
            detail: format!("<{}>", el.tag),
        });
    }
    let mut fields = kb.fields_of(&el.tag).clone();
    for (name, parsed) in check_attrs(el, &label, kb, crashes) {
        let spec = kb.spec_for(&el.tag, name).expect("checked");
        if !spec.active_at(level) {
            continue;
        }
        for effect in spec.effects_at(level) {
            fields.insert(effect.field.clone(), effect.rule.evaluate(&parsed));
        }
    }
    let children = el
        .element_children()
        .enumerate()
        .map(|(i, c)| build(c, level, kb, ids, &format!("{path}/{i}:{}", c.tag), crashes))
        .collect();
    Rendered {
        el,
        fields,
        children,
    }
}

fn emit(
    mut node: Rendered<'_>,
    parent: Option<&str>,
    index: usize,
    kb: &KnowledgeBase,
    ids: &HashMap<&str, usize>,
    out: &mut BTreeMap<String, BTreeMap<String, Scalar>>,
) {
    if let Some(overlay) = collapse_overlay(&node, kb) {
        let mut child = node.children.pop().expect("one child");
        child.fields.extend(overlay);
        emit(child, parent, index, kb, ids, out);
        return;
    }
    let path = match parent {
        None => format!("/{}", node.el.tag),
        Some(p) => format!("{p}/{index}:{}", node.el.tag),
    };
    let key = label_for(node.el, ids, &path);
    for (i, child) in node.children.into_iter().enumerate() {
        emit(child, Some(&path), i, kb, ids, out);
    }
    out.insert(key, node.fields);
}

/// Decoration fields to draw onto the only child when `node` is a wrapper
/// that can be collapsed.
fn collapse_overlay(node: &Rendered<'_>, kb: &KnowledgeBase) -> Option<BTreeMap<String, Scalar>> {
    let spec = kb.element(&node.el.tag)?;
    if !spec.collapsible_wrapper || node.children.len() != 1 || node.el.resource_id().is_some() {
        return None;
    }
    for dim in ["layout_width", "layout_height"] {
        match node.el.attr(&AttrName::android(dim)) {
            None | Some("wrap_content") => {}
            Some(_) => return None,
        }
    }
    let defaults = kb.fields_of(&node.el.tag);
    let child = &node.children[0];
    let child_defaults = kb.fields_of(&child.el.tag);
    let mut overlay = BTreeMap::new();
    for (field, value) in &node.fields {
        if defaults.get(field) == Some(value) {
            continue;
        }
        if !spec.decoration_fields.contains(field) {
            return None;
        }
        match child.fields.get(field) {
            Some(v) if child_defaults.get(field) == Some(v) => {
                overlay.insert(field.clone(), value.clone());
            }
            _ => return None,
        }
    }
    Some(overlay)
}
