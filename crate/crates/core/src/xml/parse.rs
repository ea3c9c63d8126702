use std::collections::BTreeMap;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{AttrName, Node, Opaque, XmlElement, XmlError, WELL_KNOWN_PREFIXES};

fn malformed(position: u64, reason: impl Into<String>) -> XmlError {
    XmlError::MalformedXml {
        position: position as usize,
        reason: reason.into(),
    }
}

/// Parses a layout document with exactly one root element.
///
/// `android`, `app` and `tools` resolve even without an `xmlns`
/// declaration; any other prefix must be declared in scope.
pub fn parse_document(text: &str) -> Result<XmlElement, XmlError> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().check_end_names = true;

    let mut scopes: Vec<BTreeMap<String, String>> = vec![WELL_KNOWN_PREFIXES
        .iter()
        .map(|(p, u)| (p.to_string(), u.to_string()))
        .collect()];
    // open elements with the byte offset of their start tag
    let mut stack: Vec<(XmlElement, usize)> = Vec::new();
    let mut root: Option<XmlElement> = None;

    loop {
        let start = reader.buffer_position();
        let event = reader.read_event().map_err(|e| {
            // syntax errors are all "input ended inside a construct"
            let at = match e {
                quick_xml::Error::Syntax(_) => text.len() as u64,
                _ => reader.error_position(),
            };
            malformed(at, e.to_string())
        })?;
        let end = reader.buffer_position();
        if root.is_some() && matches!(event, Event::Start(_) | Event::Empty(_)) {
            return Err(malformed(start, "content after the root element"));
        }
        match event {
            Event::Start(tag) => {
                let el = open_element(&tag, &mut scopes, start)?;
                stack.push((el, start as usize));
            }
            Event::Empty(tag) => {
                let mut el = open_element(&tag, &mut scopes, start)?;
                scopes.pop();
                el.source_span = Some(start as usize..end as usize);
                attach(el, &mut stack, &mut root);
            }
            Event::End(_) => {
                let (mut el, from) = stack
                    .pop()
                    .ok_or_else(|| malformed(start, "unexpected closing tag"))?;
                scopes.pop();
                el.source_span = Some(from..end as usize);
                attach(el, &mut stack, &mut root);
            }
            Event::Text(t) => {
                let raw = t
                    .decode()
                    .map_err(|e| malformed(start, e.to_string()))?
                    .into_owned();
                if raw.trim().is_empty() {
                    continue;
                }
                push_opaque(&mut stack, Opaque::Text(raw), start)?;
            }
            Event::GeneralRef(r) => {
                let name = r.decode().map_err(|e| malformed(start, e.to_string()))?;
                push_opaque(&mut stack, Opaque::Text(format!("&{name};")), start)?;
            }
            Event::CData(c) => {
                let raw = String::from_utf8_lossy(&c).into_owned();
                push_opaque(&mut stack, Opaque::CData(raw), start)?;
            }
            Event::Comment(c) => {
                let raw = String::from_utf8_lossy(&c).into_owned();
                if !stack.is_empty() {
                    push_opaque(&mut stack, Opaque::Comment(raw), start)?;
                }
            }
            Event::PI(pi) => {
                let raw = String::from_utf8_lossy(&pi).into_owned();
                if !stack.is_empty() {
                    push_opaque(&mut stack, Opaque::ProcessingInstruction(raw), start)?;
                }
            }
            Event::Decl(_) | Event::DocType(_) => {}
            Event::Eof => break,
        }
    }

    if let Some((el, _)) = stack.last() {
        return Err(malformed(
            text.len() as u64,
            format!("unclosed element <{}>", el.tag),
        ));
    }
    root.ok_or_else(|| malformed(text.len() as u64, "no root element"))
}

/// Parses a single element returned out of context (e.g. from an LLM reply).
/// Declarations that only restate the well-known prefixes are dropped so the
/// element compares equal to the same element inside its document.
pub fn parse_fragment(text: &str) -> Result<XmlElement, XmlError> {
    let mut el = parse_document(text.trim())?;
    el.strip_well_known_namespaces();
    Ok(el)
}

fn open_element(
    tag: &BytesStart<'_>,
    scopes: &mut Vec<BTreeMap<String, String>>,
    at: u64,
) -> Result<XmlElement, XmlError> {
    let name = std::str::from_utf8(tag.name().as_ref())
        .map_err(|e| malformed(at, e.to_string()))?
        .to_string();
    let mut el = XmlElement::new(name);
    let mut plain = Vec::new();

    for attr in tag.attributes() {
        let attr = attr.map_err(|e| malformed(at, e.to_string()))?;
        let key = std::str::from_utf8(attr.key.as_ref())
            .map_err(|e| malformed(at, e.to_string()))?
            .to_string();
        let value = attr
            .unescape_value()
            .map_err(|e| malformed(at, e.to_string()))?
            .into_owned();
        if key == "xmlns" {
            el.namespaces.insert(String::new(), value);
        } else if let Some(prefix) = key.strip_prefix("xmlns:") {
            el.namespaces.insert(prefix.to_string(), value);
        } else {
            plain.push((key, value));
        }
    }

    let mut scope = scopes.last().cloned().unwrap_or_default();
    scope.extend(el.namespaces.iter().map(|(p, u)| (p.clone(), u.clone())));
    let declared = |prefix: &str| prefix == "xml" || scope.contains_key(prefix);

    if let Some((prefix, _)) = el.tag.split_once(':') {
        if !declared(prefix) {
            return Err(malformed(
                at,
                format!("undeclared prefix `{prefix}` on <{}>", el.tag),
            ));
        }
    }
    for (key, value) in plain {
        let name: AttrName = key
            .parse()
            .map_err(|e: XmlError| malformed(at, e.to_string()))?;
        if let Some(prefix) = name.prefix() {
            if !declared(prefix) {
                return Err(malformed(
                    at,
                    format!("undeclared prefix `{prefix}` on `{key}`"),
                ));
            }
        }
        if el.set_attr(name, value).is_some() {
            return Err(malformed(at, format!("duplicate attribute `{key}`")));
        }
    }
    scopes.push(scope);
    Ok(el)
}

fn attach(el: XmlElement, stack: &mut [(XmlElement, usize)], root: &mut Option<XmlElement>) {
    match stack.last_mut() {
        Some((parent, _)) => parent.children.push(Node::Element(el)),
        None => *root = Some(el),
    }
}

fn push_opaque(stack: &mut [(XmlElement, usize)], node: Opaque, at: u64) -> Result<(), XmlError> {
    match stack.last_mut() {
        Some((parent, _)) => {
            parent.children.push(Node::Opaque(node));
            Ok(())
        }
        None => match node {
            Opaque::Text(_) => Err(malformed(at, "text outside the root element")),
            _ => Ok(()),
        },
    }
}
