use std::collections::BTreeSet;

use super::{
    describe_bug, AgentError, AgentSession, LlmBackend, PromptTemplates, RepairProposal, Verdict,
    VerdictKind,
};
use crate::fitness::CompatBug;
use crate::kb::{screen_element, KnowledgeBase};
use crate::xml::{parse_fragment, AttrName, XmlElement};

/// Splits a reply into its fenced blocks and the text around them.
fn fenced_blocks(text: &str) -> (Vec<String>, String) {
    let mut blocks = Vec::new();
    let mut outside = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let fence = line.trim_start().starts_with("```");
        match current.as_mut() {
            None if fence => current = Some(Vec::new()),
            None => outside.push(line),
            Some(_) if fence => blocks.push(current.take().expect("in block").join("\n")),
            Some(body) => body.push(line),
        }
    }
    if let Some(body) = current {
        // unterminated fence: treat the rest as a block
        blocks.push(body.join("\n"));
    }
    (blocks, outside.join("\n").trim().to_string())
}

/// Parses a Repairer reply. The element is only taken when the reply holds
/// exactly one fenced block and that block is a well-formed element;
/// otherwise the whole reply is kept as the explanation.
pub fn extract_proposal(raw: &str) -> RepairProposal {
    let (blocks, outside) = fenced_blocks(raw);
    let element = match blocks.as_slice() {
        [only] => parse_fragment(only).ok(),
        _ => None,
    };
    let explanation = if element.is_some() {
        outside
    } else {
        raw.trim().to_string()
    };
    RepairProposal {
        raw_response: raw.to_string(),
        extracted_element: element,
        explanation,
    }
}

/// Reads the leading `[PASS]` or `[FAIL]` marker (case-insensitive, leading
/// whitespace and `*` emphasis ignored).
pub fn parse_verdict(text: &str, kind: VerdictKind) -> Result<Verdict, AgentError> {
    let body = text.trim_start().trim_start_matches('*').trim_start();
    let head: String = body
        .chars()
        .take(6)
        .collect::<String>()
        .to_ascii_uppercase();
    let pass = match head.as_str() {
        "[PASS]" => true,
        "[FAIL]" => false,
        _ => return Err(AgentError::UnparsableVerdict(text.to_string())),
    };
    let rest = body[6..].trim_start_matches('*').trim();
    let explanation = if rest.is_empty() && !pass {
        "The reviewer rejected the repair without details.".to_string()
    } else {
        rest.to_string()
    };
    Ok(Verdict {
        pass,
        explanation,
        kind,
        screened: false,
    })
}

/// Sends `prompt` to the Repairer and extracts its proposal.
pub fn repairer_step(
    session: &mut AgentSession,
    prompt: String,
    round: u32,
    backend: &dyn LlmBackend,
) -> Result<RepairProposal, AgentError> {
    let reply = session.exchange(prompt, round, backend)?;
    Ok(extract_proposal(&reply))
}

/// Screens the proposal against the knowledge base and, if that finds
/// nothing, asks the Checker. Screening failures do not reach the backend.
#[allow(clippy::too_many_arguments)]
pub fn checker_step(
    session: &mut AgentSession,
    bug: &CompatBug,
    proposal: &RepairProposal,
    round: u32,
    backend: &dyn LlmBackend,
    kb: &KnowledgeBase,
    templates: &PromptTemplates,
) -> Result<Verdict, AgentError> {
    let Some(element) = &proposal.extracted_element else {
        return Ok(screened_fail(
            VerdictKind::Checker,
            templates.get("format_error")?.to_string(),
        ));
    };
    let problems = screen_element(element, kb);
    if !problems.is_empty() {
        let mut text = String::from("The repaired layout does not build:");
        for p in &problems {
            text.push_str(&format!("\n- {p}"));
        }
        return Ok(screened_fail(VerdictKind::Checker, text));
    }
    if session.transcript.is_empty() {
        let system = templates.render(
            "checker_system",
            &[("background", templates.get("background")?)],
        )?;
        *session = session.clone().with_system(system);
    }
    let request = templates.render(
        "checker_request",
        &[
            ("bug", &describe_bug(bug, templates)?),
            ("response", proposal.raw_response.trim()),
        ],
    )?;
    let reply = session.exchange(request, round, backend)?;
    parse_verdict(&reply, VerdictKind::Checker)
}

/// Asks the Optimizer whether the proposal can be reduced. Attributes the
/// proposal adds beyond the original element and the known candidates are
/// pointed out in the request. A reply without a marker counts as a pass.
#[allow(clippy::too_many_arguments)]
pub fn optimizer_step(
    session: &mut AgentSession,
    bug: &CompatBug,
    proposal: &RepairProposal,
    round: u32,
    backend: &dyn LlmBackend,
    kb: &KnowledgeBase,
    templates: &PromptTemplates,
) -> Result<Verdict, AgentError> {
    let Some(element) = &proposal.extracted_element else {
        return Ok(screened_fail(
            VerdictKind::Optimizer,
            templates.get("format_error")?.to_string(),
        ));
    };
    if session.transcript.is_empty() {
        let system = templates.render("optimizer_system", &[("rules", templates.get("rules")?)])?;
        *session = session.clone().with_system(system);
    }
    let extra = unrelated_additions(bug, element, kb);
    let screen = if extra.is_empty() {
        "Every attribute in the repair either was on the original element or is a known candidate."
            .to_string()
    } else {
        let names: Vec<String> = extra.iter().map(ToString::to_string).collect();
        format!(
            "These attributes are neither on the original element nor known candidates: {}",
            names.join(", ")
        )
    };
    let request = templates.render(
        "optimizer_request",
        &[
            ("bug", &describe_bug(bug, templates)?),
            ("response", proposal.raw_response.trim()),
            ("screen", &screen),
        ],
    )?;
    let reply = session.exchange(request, round, backend)?;
    match parse_verdict(&reply, VerdictKind::Optimizer) {
        Err(AgentError::UnparsableVerdict(raw)) => Ok(Verdict {
            pass: true,
            explanation: raw,
            kind: VerdictKind::Optimizer,
            screened: false,
        }),
        other => other,
    }
}

fn screened_fail(kind: VerdictKind, explanation: String) -> Verdict {
    Verdict {
        pass: false,
        explanation,
        kind,
        screened: true,
    }
}

/// Attribute names used anywhere in `proposed` that the original element
/// does not carry and the KB does not list as a candidate for any
/// issue-inducing attribute. Sorted.
pub fn unrelated_additions(
    bug: &CompatBug,
    proposed: &XmlElement,
    kb: &KnowledgeBase,
) -> Vec<AttrName> {
    let original = bug.element();
    let candidates: BTreeSet<AttrName> = bug
        .issue_attrs
        .iter()
        .flat_map(|a| kb.candidate_attributes(a))
        .collect();
    let mut out = BTreeSet::new();
    for el in proposed.walk() {
        for (name, _) in el.attributes() {
            if !original.has_attr(name) && !candidates.contains(name) {
                out.insert(name.clone());
            }
        }
    }
    out.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_block_is_extracted() {
        let p =
            extract_proposal("Here:\n```xml\n<ImageView android:src=\"@drawable/x\"/>\n```\nDone.");
        assert_eq!(p.extracted_element.unwrap().tag, "ImageView");
        assert_eq!(p.explanation, "Here:\nDone.");
    }

    #[test]
    fn zero_or_two_blocks_give_nothing() {
        let raw = "no code at all";
        let p = extract_proposal(raw);
        assert!(p.extracted_element.is_none());
        assert_eq!(p.explanation, raw);
        let raw = "```xml\n<A/>\n```\nor\n```xml\n<B/>\n```";
        let p = extract_proposal(raw);
        assert!(p.extracted_element.is_none());
        assert_eq!(p.explanation, raw);
        assert!(extract_proposal("```xml\n<A>\n```")
            .extracted_element
            .is_none());
    }

    #[test]
    fn verdict_markers() {
        let v = parse_verdict("[PASS] no error found", VerdictKind::Checker).unwrap();
        assert!(v.pass);
        let v = parse_verdict("  **[fail]** app:srcCompat is wrong", VerdictKind::Checker).unwrap();
        assert!(!v.pass);
        assert_eq!(v.explanation, "app:srcCompat is wrong");
        assert!(!parse_verdict("[FAIL]", VerdictKind::Checker)
            .unwrap()
            .explanation
            .is_empty());
        assert!(matches!(
            parse_verdict("Looks fine to me", VerdictKind::Checker),
            Err(AgentError::UnparsableVerdict(_))
        ));
    }
}
