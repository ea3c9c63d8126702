use std::fmt::Write;

use super::{Node, Opaque, XmlElement};

const INDENT: &str = "    ";

/// Canonical text form.
///
/// - no XML declaration; one element per line, four-space indentation
/// - `xmlns` declarations first (default namespace, then by prefix), then
///   attributes sorted by `(prefix, local)`, unprefixed first
/// - elements without element children are self-closed as `<tag .../>`
/// - comments, CDATA, processing instructions and text are omitted
/// - attribute values escape `& < > "` and tab/CR/LF as character references
/// - output ends with a single newline
pub fn serialize_canonical(root: &XmlElement) -> String {
    let mut out = String::new();
    write_element(root, 0, false, &mut out);
    out
}

/// Canonical layout that also writes opaque nodes back in place. Used when a
/// repaired document is written to disk.
pub fn serialize_preserving(root: &XmlElement) -> String {
    let mut out = String::new();
    write_element(root, 0, true, &mut out);
    out
}

/// Attribute-order and whitespace insensitive equality.
pub fn canonical_equal(a: &XmlElement, b: &XmlElement) -> bool {
    serialize_canonical(a) == serialize_canonical(b)
}

fn write_element(el: &XmlElement, depth: usize, opaque: bool, out: &mut String) {
    let pad = INDENT.repeat(depth);
    out.push_str(&pad);
    out.push('<');
    out.push_str(&el.tag);
    for (prefix, uri) in &el.namespaces {
        if prefix.is_empty() {
            let _ = write!(out, " xmlns=\"{}\"", escape(uri));
        } else {
            let _ = write!(out, " xmlns:{prefix}=\"{}\"", escape(uri));
        }
    }
    for (name, value) in el.sorted_attributes() {
        let _ = write!(out, " {name}=\"{}\"", escape(value));
    }

    let has_body = if opaque {
        !el.children.is_empty()
    } else {
        el.element_count() > 0
    };
    if !has_body {
        out.push_str("/>\n");
        return;
    }
    out.push_str(">\n");
    for child in &el.children {
        match child {
            Node::Element(e) => write_element(e, depth + 1, opaque, out),
            Node::Opaque(o) if opaque => {
                out.push_str(&pad);
                out.push_str(INDENT);
                match o {
                    Opaque::Comment(c) => {
                        let _ = write!(out, "<!--{c}-->");
                    }
                    Opaque::CData(c) => {
                        let _ = write!(out, "<![CDATA[{c}]]>");
                    }
                    Opaque::ProcessingInstruction(p) => {
                        let _ = write!(out, "<?{p}?>");
                    }
                    Opaque::Text(t) => out.push_str(t.trim()),
                }
                out.push('\n');
            }
            Node::Opaque(_) => {}
        }
    }
    out.push_str(&pad);
    let _ = writeln!(out, "</{}>", el.tag);
}

fn escape(value: &str) -> String {
    let mut s = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '&' => s.push_str("&amp;"),
            '<' => s.push_str("&lt;"),
            '>' => s.push_str("&gt;"),
            '"' => s.push_str("&quot;"),
            '\t' => s.push_str("&#9;"),
            '\n' => s.push_str("&#10;"),
            '\r' => s.push_str("&#13;"),
            c => s.push(c),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xml::{parse_document, AttrName};

    #[test]
    fn attributes_sorted() {
        let el = XmlElement::new("x")
            .with_attr("b".parse().unwrap(), "2")
            .with_attr("a".parse().unwrap(), "1");
        assert_eq!(serialize_canonical(&el), "<x a=\"1\" b=\"2\"/>\n");
    }

    #[test]
    fn nested_layout() {
        let doc = parse_document(
            r#"<LinearLayout xmlns:android="http://schemas.android.com/apk/res/android"
                   android:orientation="vertical">
                 <!-- play button -->
                 <ImageView android:id="@+id/play" android:foreground="?android:attr/actionBarItemBackground"/>
               </LinearLayout>"#,
        )
        .unwrap();
        let expected = "\
<LinearLayout xmlns:android=\"http://schemas.android.com/apk/res/android\" android:orientation=\"vertical\">
    <ImageView android:foreground=\"?android:attr/actionBarItemBackground\" android:id=\"@+id/play\"/>
</LinearLayout>
";
        assert_eq!(serialize_canonical(&doc), expected);
        assert!(serialize_preserving(&doc).contains("    <!-- play button -->\n"));
    }

    #[test]
    fn escapes_values() {
        let el = XmlElement::new("x").with_attr(AttrName::android("text"), "a<b & \"c\"\n");
        let text = serialize_canonical(&el);
        assert_eq!(
            text,
            "<x android:text=\"a&lt;b &amp; &quot;c&quot;&#10;\"/>\n"
        );
        assert_eq!(parse_document(&text).unwrap(), el);
    }

    #[test]
    fn equality_ignores_attribute_order_and_whitespace() {
        let a = parse_document(r#"<a x="1" y="2"><b/></a>"#).unwrap();
        let b = parse_document("<a   y=\"2\"\n x=\"1\">\n\n   <b></b>\n</a>").unwrap();
        assert!(canonical_equal(&a, &b));
        let c = parse_document(r#"<a x="1" y="2"/>"#).unwrap();
        assert!(!canonical_equal(&a, &c));
    }
}
