//! Layout documents: the element tree, its canonical text form, element
//! locators and the patch algebra used by every repair stage.

mod canonical;
mod locator;
mod parse;
mod patch;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use canonical::{canonical_equal, serialize_canonical, serialize_preserving};
pub use locator::{normalize_resource_id, ElementLocator, PathStep};
pub use parse::{parse_document, parse_fragment};
pub use patch::{apply_patch, diff_to_patch, Edit, Patch};

pub const ANDROID_NS: &str = "http://schemas.android.com/apk/res/android";
pub const APP_NS: &str = "http://schemas.android.com/apk/res-auto";
pub const TOOLS_NS: &str = "http://schemas.android.com/tools";

/// Prefixes every layout file can use without declaring them. LLM replies
/// routinely return bare elements with these prefixes and no `xmlns`.
pub const WELL_KNOWN_PREFIXES: [(&str, &str); 3] = [
    ("android", ANDROID_NS),
    ("app", APP_NS),
    ("tools", TOOLS_NS),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum XmlError {
    #[error("malformed XML at byte {position}: {reason}")]
    MalformedXml { position: usize, reason: String },
    #[error("edit #{edit}: locator does not resolve")]
    LocatorUnresolved { edit: usize },
    #[error("edit #{edit}: {reason}")]
    EditInvalid { edit: usize, reason: String },
    #[error("invalid attribute name `{0}`")]
    InvalidAttrName(String),
}

/// Qualified attribute name, e.g. `android:foreground`.
///
/// Ordering is `(prefix, local)` with unprefixed names first, which is the
/// order canonical serialization writes attributes in.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AttrName {
    prefix: Option<String>,
    local: String,
}

impl AttrName {
    pub fn new(prefix: Option<&str>, local: &str) -> Result<Self, XmlError> {
        let bad = |s: &str| s.is_empty() || s.contains(':') || s.chars().any(char::is_whitespace);
        if bad(local) || prefix.is_some_and(bad) {
            let full = match prefix {
                Some(p) => format!("{p}:{local}"),
                None => local.to_string(),
            };
            return Err(XmlError::InvalidAttrName(full));
        }
        Ok(Self {
            prefix: prefix.map(str::to_string),
            local: local.to_string(),
        })
    }

    pub fn android(local: &str) -> Self {
        Self::new(Some("android"), local).expect("valid local name")
    }

    pub fn app(local: &str) -> Self {
        Self::new(Some("app"), local).expect("valid local name")
    }

    pub fn prefix(&self) -> Option<&str> {
        self.prefix.as_deref()
    }

    pub fn local(&self) -> &str {
        &self.local
    }
}

impl fmt::Display for AttrName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.prefix {
            Some(p) => write!(f, "{p}:{}", self.local),
            None => f.write_str(&self.local),
        }
    }
}

impl FromStr for AttrName {
    type Err = XmlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some((p, l)) => Self::new(Some(p), l),
            None => Self::new(None, s),
        }
    }
}

impl Serialize for AttrName {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AttrName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Non-element content kept verbatim but ignored by rendering and equality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "raw", rename_all = "snake_case")]
pub enum Opaque {
    Comment(String),
    CData(String),
    ProcessingInstruction(String),
    Text(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Element(XmlElement),
    Opaque(Opaque),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XmlElement {
    pub tag: String,
    /// `xmlns` declarations made on this element; the default namespace is
    /// stored under the empty prefix.
    #[serde(default)]
    pub namespaces: BTreeMap<String, String>,
    attributes: Vec<(AttrName, String)>,
    #[serde(default)]
    pub children: Vec<Node>,
    #[serde(skip)]
    pub source_span: Option<Range<usize>>,
}

impl XmlElement {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            namespaces: BTreeMap::new(),
            attributes: Vec::new(),
            children: Vec::new(),
            source_span: None,
        }
    }

    pub fn with_attr(mut self, name: AttrName, value: impl Into<String>) -> Self {
        self.set_attr(name, value);
        self
    }

    pub fn with_child(mut self, child: XmlElement) -> Self {
        self.children.push(Node::Element(child));
        self
    }

    /// Attributes in insertion order.
    pub fn attributes(&self) -> impl Iterator<Item = (&AttrName, &str)> {
        self.attributes.iter().map(|(n, v)| (n, v.as_str()))
    }

    pub fn attr_count(&self) -> usize {
        self.attributes.len()
    }

    pub fn attr(&self, name: &AttrName) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn has_attr(&self, name: &AttrName) -> bool {
        self.attr(name).is_some()
    }

    /// Sets a value, keeping the attribute's position when it already exists.
    /// Returns the previous value.
    pub fn set_attr(&mut self, name: AttrName, value: impl Into<String>) -> Option<String> {
        let value = value.into();
        match self.attributes.iter_mut().find(|(n, _)| *n == name) {
            Some((_, v)) => Some(std::mem::replace(v, value)),
            None => {
                self.attributes.push((name, value));
                None
            }
        }
    }

    pub fn remove_attr(&mut self, name: &AttrName) -> Option<String> {
        let idx = self.attributes.iter().position(|(n, _)| n == name)?;
        Some(self.attributes.remove(idx).1)
    }

    /// The `android:id` value with its `@+id/` / `@id/` prefix stripped.
    pub fn resource_id(&self) -> Option<&str> {
        self.attr(&AttrName::android("id"))
            .map(normalize_resource_id)
    }

    pub fn element_children(&self) -> impl Iterator<Item = &XmlElement> {
        self.children.iter().filter_map(|n| match n {
            Node::Element(e) => Some(e),
            Node::Opaque(_) => None,
        })
    }

    pub fn element_count(&self) -> usize {
        self.element_children().count()
    }

    pub fn element_child(&self, index: usize) -> Option<&XmlElement> {
        self.element_children().nth(index)
    }

    pub fn element_child_mut(&mut self, index: usize) -> Option<&mut XmlElement> {
        self.children
            .iter_mut()
            .filter_map(|n| match n {
                Node::Element(e) => Some(e),
                Node::Opaque(_) => None,
            })
            .nth(index)
    }

    /// Position in `children` of the `index`-th element child.
    fn node_index_of_element(&self, index: usize) -> Option<usize> {
        self.children
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n, Node::Element(_)))
            .nth(index)
            .map(|(i, _)| i)
    }

    /// Follows element-child indices from this element.
    pub fn descendant(&self, indices: &[usize]) -> Option<&XmlElement> {
        indices.iter().try_fold(self, |el, &i| el.element_child(i))
    }

    pub fn descendant_mut(&mut self, indices: &[usize]) -> Option<&mut XmlElement> {
        let mut el = self;
        for &i in indices {
            el = el.element_child_mut(i)?;
        }
        Some(el)
    }

    /// Pre-order walk over this element and every element below it.
    pub fn walk(&self) -> Vec<&XmlElement> {
        fn visit<'a>(el: &'a XmlElement, out: &mut Vec<&'a XmlElement>) {
            out.push(el);
            for child in el.element_children() {
                visit(child, out);
            }
        }
        let mut out = Vec::new();
        visit(self, &mut out);
        out
    }

    fn sorted_attributes(&self) -> Vec<(&AttrName, &str)> {
        let mut attrs: Vec<_> = self.attributes().collect();
        attrs.sort_by(|a, b| a.0.cmp(b.0));
        attrs
    }

    /// Drops `xmlns` declarations that only restate a well-known prefix.
    pub fn strip_well_known_namespaces(&mut self) {
        self.namespaces.retain(|prefix, uri| {
            !WELL_KNOWN_PREFIXES
                .iter()
                .any(|(p, u)| p == prefix && u == uri)
        });
        for child in self.children.iter_mut() {
            if let Node::Element(e) = child {
                e.strip_well_known_namespaces();
            }
        }
    }
}

/// Structural equality: tag, namespace declarations, attributes as a set and
/// element children in order. Spans and opaque nodes are ignored.
impl PartialEq for XmlElement {
    fn eq(&self, other: &Self) -> bool {
        self.tag == other.tag
            && self.namespaces == other.namespaces
            && self.sorted_attributes() == other.sorted_attributes()
            && self.element_children().eq(other.element_children())
    }
}

impl Eq for XmlElement {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attr_name_rejects_bad_locals() {
        assert!(AttrName::new(None, "").is_err());
        assert!(AttrName::new(None, "a b").is_err());
        assert!(AttrName::new(Some("android"), "x:y").is_err());
        assert_eq!(
            "android:foreground".parse::<AttrName>().unwrap(),
            AttrName::android("foreground")
        );
    }

    #[test]
    fn attr_order_unprefixed_first() {
        let mut names = [
            AttrName::app("srcCompat"),
            AttrName::android("src"),
            "style".parse().unwrap(),
        ];
        names.sort();
        let shown: Vec<String> = names.iter().map(ToString::to_string).collect();
        assert_eq!(shown, ["style", "android:src", "app:srcCompat"]);
    }

    #[test]
    fn walk_is_preorder() {
        let tree = XmlElement::new("a")
            .with_child(XmlElement::new("b").with_child(XmlElement::new("c")))
            .with_child(XmlElement::new("d"));
        let tags: Vec<&str> = tree.walk().iter().map(|e| e.tag.as_str()).collect();
        assert_eq!(tags, ["a", "b", "c", "d"]);
    }
}
