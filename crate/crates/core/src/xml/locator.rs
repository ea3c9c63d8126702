use std::fmt;

use serde::{Deserialize, Serialize};

use super::XmlElement;

/// Strips `@+id/` or `@id/` (optionally `@android:id/`) from an id value.
pub fn normalize_resource_id(value: &str) -> &str {
    for prefix in ["@+id/", "@id/", "@android:id/"] {
        if let Some(rest) = value.strip_prefix(prefix) {
            return rest;
        }
    }
    value
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathStep {
    pub tag: String,
    /// Index among the parent's element children (0 for the root).
    pub index: usize,
}

/// Identifies one element in a document.
///
/// The first path step names the root. When `resource_id` is set and exactly
/// one element carries that `android:id`, it wins over the path; an id that
/// is missing from the document falls back to the path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ElementLocator {
    #[serde(default)]
    pub path: Vec<PathStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_id: Option<String>,
}

impl ElementLocator {
    pub fn by_id(id: &str) -> Self {
        Self {
            path: Vec::new(),
            resource_id: Some(normalize_resource_id(id).to_string()),
        }
    }

    pub fn by_path(steps: &[(&str, usize)]) -> Self {
        Self {
            path: steps
                .iter()
                .map(|(tag, index)| PathStep {
                    tag: tag.to_string(),
                    index: *index,
                })
                .collect(),
            resource_id: None,
        }
    }

    pub fn root(root: &XmlElement) -> Self {
        Self::by_path(&[(root.tag.as_str(), 0)])
    }

    /// Path-only locator for the element reached by `indices` (element-child
    /// indices below the root). `None` when the indices do not resolve.
    pub fn from_indices(root: &XmlElement, indices: &[usize]) -> Option<Self> {
        let mut path = vec![PathStep {
            tag: root.tag.clone(),
            index: 0,
        }];
        let mut el = root;
        for &i in indices {
            el = el.element_child(i)?;
            path.push(PathStep {
                tag: el.tag.clone(),
                index: i,
            });
        }
        Some(Self {
            path,
            resource_id: None,
        })
    }

    /// Like [`from_indices`](Self::from_indices) but also records the
    /// element's `android:id`, if any.
    pub fn describe(root: &XmlElement, indices: &[usize]) -> Option<Self> {
        let mut loc = Self::from_indices(root, indices)?;
        loc.resource_id = root
            .descendant(indices)
            .and_then(XmlElement::resource_id)
            .map(str::to_string);
        Some(loc)
    }

    /// Element-child indices from the root to the located element.
    pub fn resolve(&self, root: &XmlElement) -> Option<Vec<usize>> {
        if let Some(id) = &self.resource_id {
            let mut hits = Vec::new();
            find_ids(root, id, &mut Vec::new(), &mut hits);
            match hits.len() {
                1 => return hits.pop(),
                0 => {}
                _ => return None,
            }
        }
        let (first, rest) = self.path.split_first()?;
        if first.tag != root.tag || first.index != 0 {
            return None;
        }
        let mut el = root;
        let mut indices = Vec::with_capacity(rest.len());
        for step in rest {
            el = el.element_child(step.index)?;
            if el.tag != step.tag {
                return None;
            }
            indices.push(step.index);
        }
        Some(indices)
    }

    pub fn find<'a>(&self, root: &'a XmlElement) -> Option<&'a XmlElement> {
        self.resolve(root).and_then(|ix| root.descendant(&ix))
    }
}

fn find_ids(el: &XmlElement, id: &str, at: &mut Vec<usize>, hits: &mut Vec<Vec<usize>>) {
    if el.resource_id() == Some(id) {
        hits.push(at.clone());
    }
    for (i, child) in el.element_children().enumerate() {
        at.push(i);
        find_ids(child, id, at, hits);
        at.pop();
    }
}

impl fmt::Display for ElementLocator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(id) = &self.resource_id {
            write!(f, "@id/{id}")?;
            if !self.path.is_empty() {
                f.write_str(" ")?;
            }
        }
        for step in &self.path {
            write!(f, "/{}[{}]", step.tag, step.index)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xml::parse_document;

    fn doc() -> XmlElement {
        parse_document(
            r#"<LinearLayout>
                 <TextView android:id="@+id/title"/>
                 <FrameLayout>
                   <ImageView android:id="@+id/play"/>
                 </FrameLayout>
               </LinearLayout>"#,
        )
        .unwrap()
    }

    #[test]
    fn resolves_by_id_anywhere() {
        let d = doc();
        assert_eq!(
            ElementLocator::by_id("@+id/play").resolve(&d),
            Some(vec![1, 0])
        );
        assert_eq!(ElementLocator::by_id("title").resolve(&d), Some(vec![0]));
    }

    #[test]
    fn id_wins_over_stale_path() {
        let d = doc();
        let mut loc = ElementLocator::by_path(&[("LinearLayout", 0), ("ImageView", 1)]);
        assert_eq!(loc.resolve(&d), None);
        loc.resource_id = Some("play".into());
        assert_eq!(loc.resolve(&d), Some(vec![1, 0]));
    }

    #[test]
    fn path_checks_tags() {
        let d = doc();
        let ok =
            ElementLocator::by_path(&[("LinearLayout", 0), ("FrameLayout", 1), ("ImageView", 0)]);
        assert_eq!(ok.resolve(&d), Some(vec![1, 0]));
        let bad = ElementLocator::by_path(&[("LinearLayout", 0), ("TextView", 1)]);
        assert_eq!(bad.resolve(&d), None);
        assert_eq!(ElementLocator::default().resolve(&d), None);
        assert_eq!(ElementLocator::root(&d).resolve(&d), Some(vec![]));
    }

    #[test]
    fn duplicate_ids_do_not_resolve() {
        let d =
            parse_document(r#"<a><b android:id="@+id/x"/><c android:id="@+id/x"/></a>"#).unwrap();
        assert_eq!(ElementLocator::by_id("x").resolve(&d), None);
    }

    #[test]
    fn missing_id_falls_back_to_path() {
        let d = doc();
        let mut loc = ElementLocator::by_path(&[("LinearLayout", 0), ("TextView", 0)]);
        loc.resource_id = Some("gone".into());
        assert_eq!(loc.resolve(&d), Some(vec![0]));
    }
}
