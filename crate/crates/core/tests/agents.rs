mod common;

use compat_repair::agents::{
    build_initial_repairer_prompt, checker_step, extract_proposal, optimizer_step, parse_verdict,
    repairer_step, AgentError, AgentKind, AgentSession, ChatMessage, ChatRequest, LlmBackend,
    PromptTemplates, RepairHints, Role, ScriptedBackend, VerdictKind,
};
use compat_repair::fitness::{identify_key_fields, search_single_line_patches, CompatBug};
use compat_repair::kb::ApiLevel;
use compat_repair::xml::{AttrName, ElementLocator, XmlElement};
use proptest::prelude::*;

fn foreground_bug() -> CompatBug {
    let kb = common::kb();
    let records = common::corpus(&kb);
    common::record(&records, "imageview-foreground-22-23")
        .bug
        .clone()
}

fn proposal(text: &str) -> compat_repair::agents::RepairProposal {
    extract_proposal(text)
}

#[test]
fn initial_prompt_describes_the_bug_and_the_search_results() {
    let kb = common::kb();
    let bug = foreground_bug();
    let out = identify_key_fields(&bug, &kb);
    let patches = search_single_line_patches(
        &bug,
        out.key_fields.as_ref().unwrap(),
        &out.candidates,
        &kb,
        50,
    );
    let t = PromptTemplates::bundled();
    let prompt =
        build_initial_repairer_prompt(&bug, &RepairHints::ScoredPatches(patches.clone()), &t)
            .unwrap();
    assert!(prompt.contains("<ImageView"));
    assert!(prompt.contains("Conflicting API levels: (22, 23)"));
    assert!(prompt.contains("android:foreground"));
    // best-ranked entry comes first
    let lines = RepairHints::ScoredPatches(patches).lines();
    let first = prompt.find(lines[0].as_str()).expect("first line present");
    for l in &lines[1..] {
        if let Some(at) = prompt.find(l.as_str()) {
            assert!(at > first);
        }
    }
}

#[test]
fn empty_candidate_information_is_announced() {
    let t = PromptTemplates::bundled();
    let prompt = build_initial_repairer_prompt(
        &foreground_bug(),
        &RepairHints::CandidateAttributes(Vec::new()),
        &t,
    )
    .unwrap();
    assert!(prompt.contains("No candidate information available"));
}

#[test]
fn oversized_element_is_rejected_before_any_call() {
    let long = "word ".repeat(3000);
    let doc = XmlElement::new("LinearLayout").with_child(
        XmlElement::new("ImageView")
            .with_attr(AttrName::android("id"), "@+id/big")
            .with_attr(AttrName::android("contentDescription"), long)
            .with_attr(AttrName::android("foreground"), "@null"),
    );
    let bug = CompatBug::new(
        doc,
        ElementLocator::by_id("big"),
        vec![AttrName::android("foreground")],
        (ApiLevel(22), ApiLevel(23)),
        ApiLevel(23),
    )
    .unwrap();
    let t = PromptTemplates::bundled();
    assert!(matches!(
        build_initial_repairer_prompt(&bug, &RepairHints::CandidateAttributes(Vec::new()), &t),
        Err(AgentError::PromptTooLong { budget: 1000, .. })
    ));
}

#[test]
fn long_candidate_lists_are_cut_with_a_note() {
    let kb = common::kb();
    let bug = foreground_bug();
    let out = identify_key_fields(&bug, &kb);
    let one = search_single_line_patches(
        &bug,
        out.key_fields.as_ref().unwrap(),
        &out.candidates,
        &kb,
        50,
    );
    let many: Vec<_> = std::iter::repeat_n(one, 60).flatten().collect();
    let t = PromptTemplates::bundled();
    let prompt =
        build_initial_repairer_prompt(&bug, &RepairHints::ScoredPatches(many), &t).unwrap();
    assert!(prompt.contains("more candidates left out"));
}

#[test]
fn proposals_need_exactly_one_fenced_element() {
    let none = proposal("Just set android:background instead.");
    assert!(none.extracted_element.is_none());
    assert_eq!(none.explanation, "Just set android:background instead.");

    let two = proposal("```xml\n<ImageView />\n```\nor\n```xml\n<FrameLayout />\n```");
    assert!(two.extracted_element.is_none());

    let broken = proposal("```xml\n<ImageView android:src=\"x\"\n```");
    assert!(broken.extracted_element.is_none());

    let one = proposal("Here:\n```xml\n<ImageView android:id=\"@+id/play\" />\n```\nDone.");
    let el = one.extracted_element.unwrap();
    assert_eq!(el.tag, "ImageView");
    assert_eq!(one.explanation, "Here:\nDone.");
}

#[test]
fn verdict_markers() {
    let v = parse_verdict("  **[pass]** looks fine", VerdictKind::Checker).unwrap();
    assert!(v.pass);
    assert_eq!(v.explanation, "looks fine");
    let v = parse_verdict("[FAIL]", VerdictKind::Checker).unwrap();
    assert!(!v.pass && !v.explanation.is_empty());
    assert!(matches!(
        parse_verdict("It passes.", VerdictKind::Checker),
        Err(AgentError::UnparsableVerdict(_))
    ));
}

#[test]
fn screening_rejects_unknown_attributes_without_calling_the_backend() {
    let kb = common::kb();
    let bug = foreground_bug();
    let backend = common::FixedBackend::new("[PASS]");
    let p = proposal(
        "```xml\n<TextView android:id=\"@+id/t\" app:drawableTintCompat=\"@color/colorAccent\" />\n```",
    );
    let mut session = AgentSession::new(AgentKind::Checker, 0.7, "b", 0);
    let v = checker_step(
        &mut session,
        &bug,
        &p,
        1,
        &backend,
        &kb,
        &PromptTemplates::bundled(),
    )
    .unwrap();
    assert!(!v.pass && v.screened);
    assert!(v.explanation.contains("drawableTintCompat"));
    assert_eq!(backend.calls(), 0);
    assert!(session.transcript.is_empty());
}

#[test]
fn checker_failures_are_forwarded() {
    let kb = common::kb();
    let bug = foreground_bug();
    let backend = common::FixedBackend::new(
        "[FAIL] app:srcCompat replaces the image instead of adding an overlay.",
    );
    let p = proposal(
        "```xml\n<ImageView android:id=\"@+id/play\" app:srcCompat=\"@drawable/ripple_overlay\" />\n```",
    );
    let mut session = AgentSession::new(AgentKind::Checker, 0.7, "b", 0);
    let v = checker_step(
        &mut session,
        &bug,
        &p,
        1,
        &backend,
        &kb,
        &PromptTemplates::bundled(),
    )
    .unwrap();
    assert!(!v.pass && !v.screened);
    assert!(v.explanation.contains("srcCompat"));
    assert_eq!(backend.calls(), 1);
    assert!(session.is_well_formed());
}

#[test]
fn unparsable_checker_reply_is_an_error() {
    let kb = common::kb();
    let bug = foreground_bug();
    let backend = common::FixedBackend::new("Looks about right to me.");
    let p = proposal("```xml\n<ImageView android:id=\"@+id/play\" />\n```");
    let mut session = AgentSession::new(AgentKind::Checker, 0.7, "b", 0);
    assert!(matches!(
        checker_step(
            &mut session,
            &bug,
            &p,
            1,
            &backend,
            &kb,
            &PromptTemplates::bundled()
        ),
        Err(AgentError::UnparsableVerdict(_))
    ));
}

#[test]
fn optimizer_points_out_unrelated_attributes() {
    let kb = common::kb();
    let bug = foreground_bug();
    let backend = common::FixedBackend::new(
        "[FAIL] Drop android:padding, it has nothing to do with the bug.",
    );
    let p = proposal(
        "```xml\n<ImageView android:id=\"@+id/play\" android:background=\"?android:attr/actionBarItemBackground\" android:padding=\"4dp\" />\n```",
    );
    let mut session = AgentSession::new(AgentKind::Optimizer, 0.7, "b", 0);
    let v = optimizer_step(
        &mut session,
        &bug,
        &p,
        1,
        &backend,
        &kb,
        &PromptTemplates::bundled(),
    )
    .unwrap();
    assert!(!v.pass);
    assert!(v.explanation.contains("padding"));
    let asked = &session.transcript[session.transcript.len() - 2];
    assert_eq!(asked.role, Role::User);
    assert!(asked.content.contains("android:padding"));
}

#[test]
fn unparsable_optimizer_reply_counts_as_pass() {
    let kb = common::kb();
    let bug = foreground_bug();
    let backend = common::FixedBackend::new("Nothing to remove here.");
    let p = proposal("```xml\n<ImageView android:id=\"@+id/play\" />\n```");
    let mut session = AgentSession::new(AgentKind::Optimizer, 0.7, "b", 0);
    let v = optimizer_step(
        &mut session,
        &bug,
        &p,
        1,
        &backend,
        &kb,
        &PromptTemplates::bundled(),
    )
    .unwrap();
    assert!(v.pass);
}

#[test]
fn agents_keep_separate_transcripts() {
    let kb = common::kb();
    let bug = foreground_bug();
    let t = PromptTemplates::bundled();
    let reply = "Wrap it.\n```xml\n<ImageView android:id=\"@+id/play\" android:background=\"@null\" />\n```";
    let backend = common::FixedBackend::new(reply);
    let mut repairer = AgentSession::new(AgentKind::Repairer, 0.7, "b", 0);
    let secret = "repairer-only instruction 7f3a".to_string();
    let p = repairer_step(&mut repairer, secret.clone(), 1, &backend).unwrap();
    assert!(p.extracted_element.is_some());

    let verdicts = common::FixedBackend::new("[PASS] fine");
    let mut checker = AgentSession::new(AgentKind::Checker, 0.7, "b", 0);
    let mut optimizer = AgentSession::new(AgentKind::Optimizer, 0.7, "b", 0);
    checker_step(&mut checker, &bug, &p, 1, &verdicts, &kb, &t).unwrap();
    optimizer_step(&mut optimizer, &bug, &p, 1, &verdicts, &kb, &t).unwrap();
    for s in [&checker, &optimizer] {
        assert!(s.is_well_formed());
        assert_eq!(s.transcript[0].role, Role::System);
        assert!(s.transcript.iter().all(|m| !m.content.contains(&secret)));
    }
    assert_eq!(repairer.transcript.len(), 2);
}

#[test]
fn backend_errors_leave_the_transcript_alternating() {
    let mut s = AgentSession::new(AgentKind::Repairer, 0.7, "b", 0);
    assert!(matches!(
        s.exchange("hello".into(), 1, &common::DownBackend),
        Err(AgentError::BackendUnavailable(_))
    ));
    assert!(s.transcript.is_empty());
    assert!(s.is_well_formed());
}

#[test]
fn scripted_backend_picks_the_most_specific_entry() {
    let script = r#"{"schema_version": 1, "entries": [
        {"agent": "repairer", "response": "generic"},
        {"agent": "repairer", "bug": "b1", "response": "for b1"},
        {"agent": "repairer", "bug": "b1", "round": 2, "response": "for b1 round 2"},
        {"agent": "checker", "response": "[PASS]"}
    ]}"#;
    let backend = ScriptedBackend::from_json(script).unwrap();
    let ask = |agent, bug: &str, round| {
        backend
            .complete(&ChatRequest {
                agent,
                round,
                bug_id: bug.into(),
                run: 0,
                messages: vec![ChatMessage::new(Role::User, "x")],
                temperature: 0.7,
            })
            .unwrap()
    };
    assert_eq!(ask(AgentKind::Repairer, "b2", 1), "generic");
    assert_eq!(ask(AgentKind::Repairer, "b1", 1), "for b1");
    assert_eq!(ask(AgentKind::Repairer, "b1", 2), "for b1 round 2");
    assert_eq!(ask(AgentKind::Checker, "b1", 2), "[PASS]");
    let err = backend.complete(&ChatRequest {
        agent: AgentKind::Optimizer,
        round: 1,
        bug_id: "b1".into(),
        run: 0,
        messages: Vec::new(),
        temperature: 0.7,
    });
    assert!(err.is_err());
}

#[test]
fn scripts_reject_unknown_schema_versions() {
    assert!(ScriptedBackend::from_json(r#"{"schema_version": 99, "entries": []}"#).is_err());
    assert!(ScriptedBackend::from_json("not json").is_err());
}

proptest! {
    #[test]
    fn extraction_never_panics(text in ".{0,200}") {
        let p = extract_proposal(&text);
        prop_assert_eq!(p.raw_response, text);
    }

    #[test]
    fn verdict_parse_is_total(text in ".{0,80}") {
        match parse_verdict(&text, VerdictKind::Checker) {
            Ok(v) => prop_assert!(!v.screened),
            Err(e) => prop_assert!(matches!(e, AgentError::UnparsableVerdict(_)), "unexpected error kind"),
        }
    }
}
