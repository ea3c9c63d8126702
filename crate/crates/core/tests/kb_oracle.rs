mod common;

use compat_repair::kb::{
    render, screen_element, ApiLevel, CrashKind, KbError, KnowledgeBase, Scalar,
};
use compat_repair::xml::{parse_document, AttrName, XmlElement};
use proptest::prelude::*;

fn fixture(name: &str) -> XmlElement {
    let path = format!(
        "{}/assets/corpus/fixtures/{name}",
        env!("CARGO_MANIFEST_DIR")
    );
    parse_document(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn imageview_foreground_is_introduced_at_23() {
    let kb = common::kb();
    let spec = kb
        .spec_for("ImageView", &AttrName::android("foreground"))
        .unwrap();
    assert_eq!(spec.introduced, ApiLevel(23));
    // FrameLayout has had it from the start
    let frame = kb
        .spec_for("FrameLayout", &AttrName::android("foreground"))
        .unwrap();
    assert_eq!(frame.introduced, ApiLevel(21));
}

#[test]
fn foreground_renders_only_from_23() {
    let kb = common::kb();
    let doc = fixture("imageview_foreground.xml");
    let at22 = render(&doc, ApiLevel(22), &kb);
    let at23 = render(&doc, ApiLevel(23), &kb);
    assert!(!at22.crashed() && !at23.crashed());
    assert_eq!(at22.get("id/play", "mForeground"), Some(&Scalar::Unset));
    assert_eq!(
        at23.get("id/play", "mForeground"),
        Some(&Scalar::token("?android:attr/actionBarItemBackground"))
    );
    for (e, f) in at22.keys() {
        if f != "mForeground" {
            assert_eq!(at22.get(e, f), at23.get(e, f), "{e}.{f}");
        }
    }
}

#[test]
fn candidate_to_undeclared_attribute_is_inconsistent() {
    let text = r#"{
        "elements": {"View": {}},
        "attributes": [{"name": "android:alpha", "introduced": 21, "domain": {"kind": "free_text"}}],
        "candidates": {"android:alpha": ["app:alphaCompat"]}
    }"#;
    match KnowledgeBase::from_json(text, "test") {
        Err(KbError::KbInconsistent(msg)) => assert!(msg.contains("app:alphaCompat"), "{msg}"),
        other => panic!("expected KbInconsistent, got {other:?}"),
    }
}

#[test]
fn malformed_kb_is_a_schema_error() {
    assert!(matches!(
        KnowledgeBase::from_json("{\"attributes\": 3}", "test"),
        Err(KbError::KbSchemaError { .. })
    ));
    assert!(matches!(
        KnowledgeBase::from_json("{\"unexpected\": []}", "test"),
        Err(KbError::KbSchemaError { .. })
    ));
}

#[test]
fn empty_kb_knows_nothing() {
    let kb = KnowledgeBase::from_json("{}", "empty").unwrap();
    assert!(!kb.knows_attr(&AttrName::android("foreground")));
    assert!(kb
        .candidate_attributes(&AttrName::android("foreground"))
        .is_empty());
    let el = XmlElement::new("ImageView").with_attr(AttrName::android("foreground"), "@null");
    let crashes = screen_element(&el, &kb);
    assert_eq!(crashes.len(), 1);
    assert_eq!(crashes[0].kind, CrashKind::UnknownAttribute);
}

#[test]
fn kb_survives_a_json_round_trip() {
    let kb = common::kb();
    let again = KnowledgeBase::from_json(&kb.to_json(), "round trip").unwrap();
    assert_eq!(again.attributes(), kb.attributes());
    assert_eq!(again.resources(), kb.resources());
}

#[test]
fn rendering_is_deterministic() {
    let kb = common::kb();
    let doc = fixture("textview_autosize_min.xml");
    for l in 21..=31 {
        let a = render(&doc, ApiLevel(l), &kb);
        let b = render(&doc, ApiLevel(l), &kb);
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}

#[test]
fn fabricated_attribute_crashes_at_compile_time() {
    let kb = common::kb();
    let mut doc = fixture("textview_drawabletint.xml");
    let ix: Vec<usize> = vec![0];
    let el = doc.descendant_mut(&ix).unwrap();
    el.set_attr(AttrName::app("drawableTintCompat"), "@color/colorAccent");
    let state = render(&doc, ApiLevel(23), &kb);
    let crash = state.first_crash().expect("crash");
    assert_eq!(crash.kind, CrashKind::UnknownAttribute);
    assert!(crash.kind.at_compile_time());
    assert!(
        crash.detail.contains("drawableTintCompat"),
        "{}",
        crash.detail
    );
}

#[test]
fn unknown_tag_crashes_at_run_time() {
    let kb = common::kb();
    let doc = XmlElement::new("LinearLayout").with_child(XmlElement::new("NoSuchWidget"));
    let state = render(&doc, ApiLevel(25), &kb);
    assert_eq!(state.first_crash().unwrap().kind, CrashKind::UnknownElement);
    assert!(!CrashKind::UnknownElement.at_compile_time());
}

#[test]
fn missing_resource_does_not_link() {
    let kb = common::kb();
    let el =
        XmlElement::new("ImageView").with_attr(AttrName::android("src"), "@drawable/not_there");
    let state = render(&el, ApiLevel(25), &kb);
    assert_eq!(
        state.first_crash().unwrap().kind,
        CrashKind::UnresolvedResource
    );
    let kb2 = kb.with_resource("@drawable/not_there");
    assert!(!render(&el, ApiLevel(25), &kb2).crashed());
}

#[test]
fn candidate_lists() {
    let kb = common::kb();
    assert!(kb
        .candidate_attributes(&AttrName::android("gravity"))
        .contains(&AttrName::android("top")));
    assert!(kb
        .candidate_attributes(&AttrName::android("src"))
        .contains(&AttrName::app("srcCompat")));
    assert!(kb
        .candidate_attributes(&AttrName::android("inventedThing"))
        .is_empty());
}

fn tag_for(kb: &KnowledgeBase, i: usize) -> Option<String> {
    let spec = &kb.attributes()[i];
    let tag = match spec.applies_to[0].as_str() {
        "*" => "View".to_string(),
        t => t.to_string(),
    };
    (kb.spec_for(&tag, &spec.name) == Some(spec)).then_some(tag)
}

fn value_for(kb: &KnowledgeBase, i: usize, pick: usize) -> String {
    let values = kb.attributes()[i].domain.enumerate("@null", kb.resources());
    values[pick % values.len()].clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn attributes_do_nothing_before_introduction(i in any::<prop::sample::Index>(), pick in 0usize..64, lv in 0u8..11) {
        let kb = common::kb();
        let late: Vec<usize> = (0..kb.attributes().len())
            .filter(|&k| kb.attributes()[k].introduced > kb.levels().min)
            .collect();
        let i = late[i.index(late.len())];
        let spec = &kb.attributes()[i];
        let Some(tag) = tag_for(&kb, i) else { return Ok(()); };
        let level = ApiLevel(kb.levels().min.0 + lv % (spec.introduced.0 - kb.levels().min.0));
        let bare = XmlElement::new(tag.as_str()).with_attr(AttrName::android("id"), "@+id/probe");
        let with = bare.clone().with_attr(spec.name.clone(), value_for(&kb, i, pick));
        let a = render(&bare, level, &kb);
        let b = render(&with, level, &kb);
        prop_assert_eq!(a.elements, b.elements);
    }

    #[test]
    fn effects_hold_from_introduction_on(i in any::<prop::sample::Index>(), pick in 0usize..64, lv in 0u8..11) {
        let kb = common::kb();
        let i = i.index(kb.attributes().len());
        let spec = &kb.attributes()[i];
        let Some(tag) = tag_for(&kb, i) else { return Ok(()); };
        let level = ApiLevel(21 + lv);
        prop_assume!(spec.active_at(level));
        let value = value_for(&kb, i, pick);
        let parsed = spec.domain.parse(&value).unwrap();
        let el = XmlElement::new(tag.as_str())
            .with_attr(AttrName::android("id"), "@+id/probe")
            .with_attr(spec.name.clone(), value);
        let state = render(&el, level, &kb);
        prop_assume!(!state.crashed());
        for e in spec.effects_at(level) {
            // a later attribute in name order may write the same field
            let clobbered = el.attributes().any(|(n, _)| {
                n > &spec.name && kb.spec_for(&tag, n).is_some_and(|s| s.effects_at(level).iter().any(|o| o.field == e.field))
            });
            if !clobbered {
                prop_assert_eq!(state.get("id/probe", &e.field), Some(&e.rule.evaluate(&parsed)));
            }
        }
    }

    #[test]
    fn adding_a_resource_never_adds_crashes(
        attrs in prop::collection::vec((any::<prop::sample::Index>(), 0usize..64, prop::bool::ANY), 1..6),
        child in prop::sample::select(vec!["ImageView", "TextView", "EditText", "SeekBar", "FrameLayout"]),
        missing in 0u8..4,
        lv in 0u8..11,
    ) {
        let kb = common::kb();
        let mut el = XmlElement::new(child);
        for (i, pick, dangling) in attrs {
            let i = i.index(kb.attributes().len());
            let value = if dangling { format!("@drawable/extra_{}", pick % 4) } else { value_for(&kb, i, pick) };
            el.set_attr(kb.attributes()[i].name.clone(), value);
        }
        let doc = XmlElement::new("LinearLayout").with_child(el);
        let level = ApiLevel(21 + lv);
        let before = render(&doc, level, &kb);
        let after = render(&doc, level, &kb.with_resource(&format!("@drawable/extra_{missing}")));
        for c in &after.crashes {
            prop_assert!(before.crashes.contains(c), "new crash {c}");
        }
        if !before.crashed() {
            prop_assert!(!after.crashed());
        }
    }

    #[test]
    fn render_is_pure(name in prop::sample::select(vec![
        "imageview_foreground.xml", "edittext_gravity.xml", "seekbar_height.xml",
        "textview_drawabletint_pair.xml", "scrollview_fadingedge.xml",
    ]), lv in 0u8..11) {
        let kb = common::kb();
        let doc = fixture(name);
        let copy = doc.clone();
        let a = render(&doc, ApiLevel(21 + lv), &kb);
        let b = render(&doc, ApiLevel(21 + lv), &kb);
        prop_assert_eq!(a, b);
        prop_assert_eq!(doc, copy);
    }
}
