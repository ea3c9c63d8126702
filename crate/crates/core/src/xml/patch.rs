use std::fmt;

use serde::{Deserialize, Serialize};

use super::{canonical_equal, AttrName, ElementLocator, Node, PathStep, XmlElement, XmlError};

/// One edit operation. Every edit names its target with a locator that must
/// resolve in the document produced by the edits before it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Edit {
    SetAttr {
        target: ElementLocator,
        name: AttrName,
        value: String,
    },
    /// Removing an attribute the element does not carry is a no-op.
    RemoveAttr {
        target: ElementLocator,
        name: AttrName,
    },
    /// Swaps `old` for `new` in one step; `old` must be present.
    ReplaceAttr {
        target: ElementLocator,
        old: AttrName,
        new: AttrName,
        value: String,
    },
    ReplaceTag {
        target: ElementLocator,
        tag: String,
    },
    /// Puts a new `wrapper` element where the target was and moves the target
    /// inside it. Attributes listed in `moved` leave the target and are set
    /// on the wrapper.
    WrapElement {
        target: ElementLocator,
        wrapper: String,
        #[serde(default)]
        moved: Vec<AttrName>,
    },
    /// Replaces a wrapper that has exactly one element child with that child.
    /// Wrapper attributes listed in `restore` are copied onto the child; the
    /// rest are dropped.
    UnwrapElement {
        target: ElementLocator,
        #[serde(default)]
        restore: Vec<AttrName>,
    },
    /// Inserts `element` right after the target, as its next sibling.
    InsertSiblingAttrCarrier {
        target: ElementLocator,
        element: XmlElement,
    },
    ReplaceElement {
        target: ElementLocator,
        element: XmlElement,
    },
    RemoveElement {
        target: ElementLocator,
    },
    /// Inserts `element` as the `index`-th element child of `parent`.
    InsertElement {
        parent: ElementLocator,
        index: usize,
        element: XmlElement,
    },
}

impl Edit {
    pub fn target(&self) -> &ElementLocator {
        match self {
            Edit::SetAttr { target, .. }
            | Edit::RemoveAttr { target, .. }
            | Edit::ReplaceAttr { target, .. }
            | Edit::ReplaceTag { target, .. }
            | Edit::WrapElement { target, .. }
            | Edit::UnwrapElement { target, .. }
            | Edit::InsertSiblingAttrCarrier { target, .. }
            | Edit::ReplaceElement { target, .. }
            | Edit::RemoveElement { target } => target,
            Edit::InsertElement { parent, .. } => parent,
        }
    }

    /// Attribute names this edit reads or writes on its target.
    pub fn touched_attrs(&self) -> Vec<&AttrName> {
        match self {
            Edit::SetAttr { name, .. } | Edit::RemoveAttr { name, .. } => vec![name],
            Edit::ReplaceAttr { old, new, .. } => vec![old, new],
            Edit::WrapElement { moved, .. } => moved.iter().collect(),
            Edit::UnwrapElement { restore, .. } => restore.iter().collect(),
            _ => Vec::new(),
        }
    }

    pub fn is_structural(&self) -> bool {
        !matches!(
            self,
            Edit::SetAttr { .. } | Edit::RemoveAttr { .. } | Edit::ReplaceAttr { .. }
        )
    }
}

impl fmt::Display for Edit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Edit::SetAttr {
                target,
                name,
                value,
            } => write!(f, "set {name}=\"{value}\" on {target}"),
            Edit::RemoveAttr { target, name } => write!(f, "remove {name} from {target}"),
            Edit::ReplaceAttr {
                target,
                old,
                new,
                value,
            } => {
                write!(f, "replace {old} with {new}=\"{value}\" on {target}")
            }
            Edit::ReplaceTag { target, tag } => write!(f, "retag {target} as <{tag}>"),
            Edit::WrapElement {
                target,
                wrapper,
                moved,
            } => {
                write!(f, "wrap {target} in <{wrapper}>")?;
                if !moved.is_empty() {
                    let names: Vec<String> = moved.iter().map(ToString::to_string).collect();
                    write!(f, " moving {}", names.join(", "))?;
                }
                Ok(())
            }
            Edit::UnwrapElement { target, .. } => write!(f, "unwrap {target}"),
            Edit::InsertSiblingAttrCarrier { target, element } => {
                write!(f, "insert <{}> after {target}", element.tag)
            }
            Edit::ReplaceElement { target, element } => {
                write!(f, "replace {target} with <{}>", element.tag)
            }
            Edit::RemoveElement { target } => write!(f, "remove {target}"),
            Edit::InsertElement {
                parent,
                index,
                element,
            } => {
                write!(f, "insert <{}> into {parent} at {index}", element.tag)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub edits: Vec<Edit>,
}

impl Patch {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn single(edit: Edit) -> Self {
        Self { edits: vec![edit] }
    }

    pub fn is_identity(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn len(&self) -> usize {
        self.edits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn then(mut self, other: Patch) -> Self {
        self.edits.extend(other.edits);
        self
    }

    /// The patch that undoes `self` when applied to `apply_patch(pre, self)`.
    pub fn inverse(&self, pre: &XmlElement) -> Result<Patch, XmlError> {
        let mut state = pre.clone();
        let mut undo = Vec::new();
        for (i, edit) in self.edits.iter().enumerate() {
            let ix = edit
                .target()
                .resolve(&state)
                .ok_or(XmlError::LocatorUnresolved { edit: i })?;
            let inv = invert(&state, &ix, edit)
                .map_err(|reason| XmlError::EditInvalid { edit: i, reason })?;
            apply_edit(&mut state, &ix, edit)
                .map_err(|reason| XmlError::EditInvalid { edit: i, reason })?;
            undo.push(inv);
        }
        undo.reverse();
        Ok(Patch {
            edits: undo.into_iter().flatten().collect(),
        })
    }
}

impl fmt::Display for Patch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.edits.is_empty() {
            return f.write_str("(no edits)");
        }
        for (i, edit) in self.edits.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{edit}")?;
        }
        Ok(())
    }
}

/// Applies `patch` to a copy of `root`.
pub fn apply_patch(root: &XmlElement, patch: &Patch) -> Result<XmlElement, XmlError> {
    let mut out = root.clone();
    for (i, edit) in patch.edits.iter().enumerate() {
        let ix = edit
            .target()
            .resolve(&out)
            .ok_or(XmlError::LocatorUnresolved { edit: i })?;
        apply_edit(&mut out, &ix, edit)
            .map_err(|reason| XmlError::EditInvalid { edit: i, reason })?;
    }
    Ok(out)
}

fn apply_edit(root: &mut XmlElement, ix: &[usize], edit: &Edit) -> Result<(), String> {
    match edit {
        Edit::SetAttr { name, value, .. } => {
            at_mut(root, ix)?.set_attr(name.clone(), value.clone());
        }
        Edit::RemoveAttr { name, .. } => {
            at_mut(root, ix)?.remove_attr(name);
        }
        Edit::ReplaceAttr {
            old, new, value, ..
        } => {
            let el = at_mut(root, ix)?;
            if el.remove_attr(old).is_none() {
                return Err(format!("<{}> has no {old}", el.tag));
            }
            el.set_attr(new.clone(), value.clone());
        }
        Edit::ReplaceTag { tag, .. } => {
            check_tag(tag)?;
            at_mut(root, ix)?.tag = tag.clone();
        }
        Edit::WrapElement { wrapper, moved, .. } => {
            check_tag(wrapper)?;
            let mut outer = XmlElement::new(wrapper.clone());
            let inner = at_mut(root, ix)?;
            for name in moved {
                let v = inner
                    .remove_attr(name)
                    .ok_or_else(|| format!("<{}> has no {name} to move", inner.tag))?;
                outer.set_attr(name.clone(), v);
            }
            swap_element(root, ix, |inner| outer.with_child(inner))?;
        }
        Edit::UnwrapElement { restore, .. } => {
            let outer = at_mut(root, ix)?;
            if outer.element_count() != 1 {
                return Err(format!(
                    "<{}> has {} element children, expected 1",
                    outer.tag,
                    outer.element_count()
                ));
            }
            for name in restore {
                if !outer.has_attr(name) {
                    return Err(format!("<{}> has no {name} to restore", outer.tag));
                }
            }
            swap_element(root, ix, |outer| {
                let mut inner = outer.element_children().next().cloned().expect("one child");
                for name in restore {
                    inner.set_attr(name.clone(), outer.attr(name).expect("checked").to_string());
                }
                inner
            })?;
        }
        Edit::InsertSiblingAttrCarrier { element, .. } => {
            let (parent_ix, last) = split_last(ix)?;
            insert_child(at_mut(root, parent_ix)?, last + 1, element.clone())?;
        }
        Edit::ReplaceElement { element, .. } => {
            swap_element(root, ix, |_| element.clone())?;
        }
        Edit::RemoveElement { .. } => {
            let (parent_ix, last) = split_last(ix)?;
            let parent = at_mut(root, parent_ix)?;
            let node = parent
                .node_index_of_element(last)
                .ok_or("element vanished")?;
            parent.children.remove(node);
        }
        Edit::InsertElement { index, element, .. } => {
            insert_child(at_mut(root, ix)?, *index, element.clone())?;
        }
    }
    Ok(())
}

/// Edits that undo `edit` once it has been applied to `state` at `ix`.
/// Locators are path-only so they stay valid even when ids change.
fn invert(state: &XmlElement, ix: &[usize], edit: &Edit) -> Result<Vec<Edit>, String> {
    let el = state.descendant(ix).ok_or("target vanished")?;
    let here = |tag: &str| path_locator(state, ix, tag);
    let restore_attr = |target: ElementLocator, name: &AttrName| match el.attr(name) {
        Some(v) => Edit::SetAttr {
            target,
            name: name.clone(),
            value: v.to_string(),
        },
        None => Edit::RemoveAttr {
            target,
            name: name.clone(),
        },
    };
    Ok(match edit {
        Edit::SetAttr { name, .. } | Edit::RemoveAttr { name, .. } => {
            vec![restore_attr(here(&el.tag), name)]
        }
        Edit::ReplaceAttr { old, new, .. } => {
            let old_value = el
                .attr(old)
                .ok_or_else(|| format!("<{}> has no {old}", el.tag))?;
            let target = here(&el.tag);
            let mut undo = vec![Edit::ReplaceAttr {
                target: target.clone(),
                old: new.clone(),
                new: old.clone(),
                value: old_value.to_string(),
            }];
            if new != old {
                if let Some(prev) = el.attr(new) {
                    undo.push(Edit::SetAttr {
                        target,
                        name: new.clone(),
                        value: prev.to_string(),
                    });
                }
            }
            undo
        }
        Edit::ReplaceTag { tag, .. } => vec![Edit::ReplaceTag {
            target: here(tag),
            tag: el.tag.clone(),
        }],
        Edit::WrapElement { wrapper, moved, .. } => vec![Edit::UnwrapElement {
            target: here(wrapper),
            restore: moved.clone(),
        }],
        Edit::UnwrapElement { restore, .. } => {
            let child = el.element_child(0).ok_or("nothing to unwrap")?;
            let target = here(&child.tag);
            let mut undo = vec![Edit::WrapElement {
                target: target.clone(),
                wrapper: el.tag.clone(),
                moved: Vec::new(),
            }];
            let mut wrapper_loc = target.clone();
            if let Some(last) = wrapper_loc.path.last_mut() {
                last.tag = el.tag.clone();
            }
            let mut child_loc = wrapper_loc.clone();
            child_loc.path.push(PathStep {
                tag: child.tag.clone(),
                index: 0,
            });
            for (name, value) in el.attributes() {
                undo.push(Edit::SetAttr {
                    target: wrapper_loc.clone(),
                    name: name.clone(),
                    value: value.to_string(),
                });
            }
            for name in restore {
                undo.push(match child.attr(name) {
                    Some(v) => Edit::SetAttr {
                        target: child_loc.clone(),
                        name: name.clone(),
                        value: v.to_string(),
                    },
                    None => Edit::RemoveAttr {
                        target: child_loc.clone(),
                        name: name.clone(),
                    },
                });
            }
            if !el.namespaces.is_empty() {
                // namespace declarations are not edit targets; put the whole
                // wrapper back instead
                undo = vec![Edit::ReplaceElement {
                    target,
                    element: el.clone(),
                }];
            }
            undo
        }
        Edit::InsertSiblingAttrCarrier { element, .. } => {
            let (parent_ix, last) = split_last(ix)?;
            let mut sibling = parent_ix.to_vec();
            sibling.push(last + 1);
            let mut loc = path_locator(
                state,
                parent_ix,
                &state.descendant(parent_ix).ok_or("no parent")?.tag,
            );
            loc.path.push(PathStep {
                tag: element.tag.clone(),
                index: last + 1,
            });
            vec![Edit::RemoveElement { target: loc }]
        }
        Edit::ReplaceElement { element, .. } => vec![Edit::ReplaceElement {
            target: here(&element.tag),
            element: el.clone(),
        }],
        Edit::RemoveElement { .. } => {
            let (parent_ix, last) = split_last(ix)?;
            let parent = state.descendant(parent_ix).ok_or("no parent")?;
            vec![Edit::InsertElement {
                parent: path_locator(state, parent_ix, &parent.tag),
                index: last,
                element: el.clone(),
            }]
        }
        Edit::InsertElement { index, element, .. } => {
            let mut loc = here(&el.tag);
            loc.path.push(PathStep {
                tag: element.tag.clone(),
                index: *index,
            });
            vec![Edit::RemoveElement { target: loc }]
        }
    })
}

/// Path locator for `ix` in `state`, with the last step's tag overridden.
fn path_locator(state: &XmlElement, ix: &[usize], last_tag: &str) -> ElementLocator {
    let mut loc = ElementLocator::from_indices(state, ix).expect("resolved indices");
    if let Some(last) = loc.path.last_mut() {
        last.tag = last_tag.to_string();
    }
    loc
}

fn at_mut<'a>(root: &'a mut XmlElement, ix: &[usize]) -> Result<&'a mut XmlElement, String> {
    root.descendant_mut(ix)
        .ok_or_else(|| "target vanished".to_string())
}

fn split_last(ix: &[usize]) -> Result<(&[usize], usize), String> {
    match ix.split_last() {
        Some((last, parent)) => Ok((parent, *last)),
        None => Err("the root element has no siblings".to_string()),
    }
}

fn check_tag(tag: &str) -> Result<(), String> {
    if tag.is_empty()
        || tag
            .chars()
            .any(|c| c.is_whitespace() || "<>/\"'=".contains(c))
    {
        return Err(format!("invalid tag `{tag}`"));
    }
    Ok(())
}

fn insert_child(parent: &mut XmlElement, index: usize, el: XmlElement) -> Result<(), String> {
    let count = parent.element_count();
    if index > count {
        return Err(format!("index {index} past {count} element children"));
    }
    let node = if index == count {
        parent.children.len()
    } else {
        parent.node_index_of_element(index).expect("in range")
    };
    parent.children.insert(node, Node::Element(el));
    Ok(())
}

fn swap_element(
    root: &mut XmlElement,
    ix: &[usize],
    f: impl FnOnce(XmlElement) -> XmlElement,
) -> Result<(), String> {
    let slot = at_mut(root, ix)?;
    let old = std::mem::replace(slot, XmlElement::new("_"));
    *slot = f(old);
    Ok(())
}

/// Expresses "replace the element at `locator` with `proposed`" as a small
/// patch: attribute edits when the tag is kept, a wrap plus attribute edits
/// when `proposed` wraps the original element, a whole-element replacement
/// otherwise. The result always reproduces `proposed` exactly.
pub fn diff_to_patch(
    doc: &XmlElement,
    locator: &ElementLocator,
    proposed: &XmlElement,
) -> Result<Patch, XmlError> {
    let ix = locator
        .resolve(doc)
        .ok_or(XmlError::LocatorUnresolved { edit: 0 })?;
    let orig = doc.descendant(&ix).expect("resolved");
    let mut proposed = proposed.clone();
    proposed.strip_well_known_namespaces();
    let target = ElementLocator::from_indices(doc, &ix).expect("resolved");
    let replace = Patch::single(Edit::ReplaceElement {
        target: target.clone(),
        element: proposed.clone(),
    });

    let structure_kept = |a: &XmlElement, b: &XmlElement| {
        a.namespaces == b.namespaces && a.element_children().eq(b.element_children())
    };

    let patch = if proposed.tag == orig.tag && structure_kept(orig, &proposed) {
        Patch {
            edits: attr_edits(&target, orig, &proposed),
        }
    } else if proposed.element_count() == 1
        && proposed.namespaces.is_empty()
        && proposed
            .element_child(0)
            .is_some_and(|c| c.tag == orig.tag && structure_kept(orig, c))
    {
        let child = proposed.element_child(0).expect("one child");
        let moved: Vec<AttrName> = orig
            .attributes()
            .filter(|(n, v)| proposed.attr(n) == Some(*v) && !child.has_attr(n))
            .map(|(n, _)| n.clone())
            .collect();
        let mut edits = vec![Edit::WrapElement {
            target: target.clone(),
            wrapper: proposed.tag.clone(),
            moved: moved.clone(),
        }];
        let mut wrapper_loc = target.clone();
        wrapper_loc.path.last_mut().expect("non-empty path").tag = proposed.tag.clone();
        let mut child_loc = wrapper_loc.clone();
        child_loc.path.push(PathStep {
            tag: orig.tag.clone(),
            index: 0,
        });
        let mut remaining = orig.clone();
        for name in &moved {
            remaining.remove_attr(name);
        }
        edits.extend(attr_edits(&child_loc, &remaining, child));
        let mut bare = XmlElement::new(proposed.tag.clone());
        for name in &moved {
            bare.set_attr(name.clone(), proposed.attr(name).expect("moved attr"));
        }
        edits.extend(attr_edits(&wrapper_loc, &bare, &proposed));
        Patch { edits }
    } else {
        replace.clone()
    };

    match apply_patch(doc, &patch) {
        Ok(out)
            if out
                .descendant(&ix)
                .is_some_and(|e| canonical_equal(e, &proposed)) =>
        {
            Ok(patch)
        }
        _ => Ok(replace),
    }
}

/// Attribute edits turning `from`'s attributes into `to`'s. A removed and an
/// added attribute become one `ReplaceAttr` when they share a local name or
/// are the only removal and addition.
fn attr_edits(target: &ElementLocator, from: &XmlElement, to: &XmlElement) -> Vec<Edit> {
    let mut removed: Vec<&AttrName> = from
        .attributes()
        .filter(|(n, _)| !to.has_attr(n))
        .map(|(n, _)| n)
        .collect();
    let mut added: Vec<(&AttrName, &str)> =
        to.attributes().filter(|(n, _)| !from.has_attr(n)).collect();
    let mut changed: Vec<(&AttrName, &str)> = to
        .attributes()
        .filter(|(n, v)| from.attr(n).is_some_and(|old| old != *v))
        .collect();
    removed.sort();
    added.sort();
    changed.sort();

    let lone_swap = removed.len() == 1 && added.len() == 1;
    let mut edits = Vec::new();
    for old in removed {
        match added
            .iter()
            .position(|(n, _)| lone_swap || n.local() == old.local())
        {
            Some(pos) => {
                let (new, value) = added.remove(pos);
                edits.push(Edit::ReplaceAttr {
                    target: target.clone(),
                    old: old.clone(),
                    new: new.clone(),
                    value: value.to_string(),
                });
            }
            None => edits.push(Edit::RemoveAttr {
                target: target.clone(),
                name: old.clone(),
            }),
        }
    }
    for (name, value) in changed.into_iter().chain(added) {
        edits.push(Edit::SetAttr {
            target: target.clone(),
            name: name.clone(),
            value: value.to_string(),
        });
    }
    edits
}
