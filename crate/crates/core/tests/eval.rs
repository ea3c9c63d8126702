mod common;

use std::path::Path;

use compat_repair::agents::PromptTemplates;
use compat_repair::eval::{
    compute_metrics, derive_seed, emit_report, evaluate, failure_histogram, judge, load_corpus,
    report_from_sessions, CorpusError, Difficulty, EvaluationReport, FailureCategory, Judgment,
    ReportFormat,
};
use compat_repair::xml::{apply_patch, AttrName, Edit, ElementLocator, Patch};
use proptest::prelude::*;
use serde_json::json;

fn set(id: &str, name: AttrName, value: &str) -> Patch {
    Patch::single(Edit::SetAttr {
        target: ElementLocator::by_id(id),
        name,
        value: value.into(),
    })
}

#[test]
fn judge_examples() {
    let kb = common::kb();
    let records = common::corpus(&kb);

    let fg = common::record(&records, "imageview-foreground-22-23");
    let wrap = Patch::single(Edit::WrapElement {
        target: ElementLocator::by_id("play"),
        wrapper: "FrameLayout".into(),
        moved: vec![AttrName::android("foreground")],
    });
    let wrapped = apply_patch(&fg.bug.document, &wrap).unwrap();
    assert_eq!(judge(&wrapped, &fg.bug, &kb), Judgment::Correct);
    assert_eq!(
        judge(&fg.bug.document, &fg.bug, &kb),
        Judgment::Failed(FailureCategory::NoRepair)
    );
    let removed = common::strip_issue_attrs(&fg.bug);
    assert_eq!(
        judge(&removed, &fg.bug, &kb),
        Judgment::Failed(FailureCategory::Removal)
    );
    let dangling = apply_patch(
        &fg.bug.document,
        &set("play", AttrName::android("foreground"), "@drawable/nope"),
    )
    .unwrap();
    assert_eq!(
        judge(&dangling, &fg.bug, &kb),
        Judgment::Failed(FailureCategory::UnresolvedResource)
    );
    let unknown = apply_patch(
        &fg.bug.document,
        &set("play", AttrName::app("foregroundCompat"), "@null"),
    )
    .unwrap();
    assert_eq!(
        judge(&unknown, &fg.bug, &kb),
        Judgment::Failed(FailureCategory::InvalidAttribute)
    );

    let gravity = common::record(&records, "edittext-gravity-22-23");
    let changed = apply_patch(
        &gravity.bug.document,
        &set(
            "phone",
            AttrName::android("gravity"),
            "center_vertical|center_horizontal",
        ),
    )
    .unwrap();
    assert_eq!(
        judge(&changed, &gravity.bug, &kb),
        Judgment::Failed(FailureCategory::ValueUpdate)
    );
}

#[test]
fn reference_repairs_are_correct() {
    let kb = common::kb();
    for r in common::corpus(&kb) {
        let fixed = apply_patch(&r.bug.document, &r.reference_repair).unwrap();
        assert_eq!(judge(&fixed, &r.bug, &kb), Judgment::Correct, "{}", r.id);
    }
}

#[test]
fn metric_arithmetic() {
    use Judgment::*;
    let f = Failed(FailureCategory::NoRepair);
    let m = compute_metrics(&[vec![Correct, f, f, f, f]]);
    assert!((m.correct - 0.2).abs() < 1e-12);
    assert_eq!(m.correct_at_k, 1.0);
    assert_eq!(m.overfitting, 0.0);

    let m = compute_metrics(&[vec![Correct, Overfitting], vec![f, f]]);
    assert_eq!(
        (m.correct, m.overfitting, m.correct_at_k),
        (0.25, 0.25, 0.5)
    );
    assert_eq!(compute_metrics(&[]), Default::default());

    let h = failure_histogram(&[vec![f, Failed(FailureCategory::Removal)], vec![f, Correct]]);
    assert_eq!(h.len(), 6);
    assert_eq!(h[&FailureCategory::NoRepair], 2);
    assert_eq!(h[&FailureCategory::Removal], 1);
    assert_eq!(h[&FailureCategory::UnresolvedResource], 0);
}

fn judgment() -> impl Strategy<Value = Judgment> {
    prop_oneof![
        Just(Judgment::Correct),
        Just(Judgment::Overfitting),
        prop::sample::select(FailureCategory::ALL.to_vec()).prop_map(Judgment::Failed),
    ]
}

proptest! {
    #[test]
    fn correct_at_k_dominates_correct(matrix in (1usize..6).prop_flat_map(|k| {
        prop::collection::vec(prop::collection::vec(judgment(), k), 1..10)
    })) {
        let m = compute_metrics(&matrix);
        prop_assert!(m.correct_at_k + 1e-12 >= m.correct);
        prop_assert!(m.correct + m.overfitting <= 1.0 + 1e-12);
        let failed: u32 = failure_histogram(&matrix).values().sum();
        let runs: usize = matrix.iter().map(Vec::len).sum();
        let ok = matrix.iter().flatten().filter(|j| !matches!(j, Judgment::Failed(_))).count();
        prop_assert_eq!(failed as usize + ok, runs);
    }

    #[test]
    fn seeds_differ_by_run(base in any::<u64>(), run in 0u32..100) {
        prop_assert_eq!(derive_seed(base, "bug", run), derive_seed(base, "bug", run));
        prop_assert_ne!(derive_seed(base, "bug", run), derive_seed(base, "bug", run + 1));
        prop_assert_ne!(derive_seed(base, "bug", run), derive_seed(base, "gub", run));
    }
}

#[test]
fn empty_report_is_a_bare_table() {
    let table = emit_report(&EvaluationReport::default(), ReportFormat::Table);
    assert_eq!(table.lines().count(), 2);
    assert!(table.starts_with("| Method | Correct | Overfitting | Correct@k |"));
    let machine = emit_report(&EvaluationReport::default(), ReportFormat::Machine);
    let back: EvaluationReport = serde_json::from_str(&machine).unwrap();
    assert_eq!(back, EvaluationReport::default());
}

fn write_manifest(dir: &Path, bugs: serde_json::Value) -> std::path::PathBuf {
    let fixtures = dir.join("fixtures");
    std::fs::create_dir_all(&fixtures).unwrap();
    let src =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/corpus/fixtures/edittext_gravity.xml");
    std::fs::copy(src, fixtures.join("edittext_gravity.xml")).unwrap();
    let path = dir.join("manifest.json");
    std::fs::write(
        &path,
        json!({"schema_version": 1, "bugs": bugs}).to_string(),
    )
    .unwrap();
    path
}

fn gravity_entry(issue: &str) -> serde_json::Value {
    json!({
        "id": "gravity",
        "fixture": "fixtures/edittext_gravity.xml",
        "locator": {"resource_id": "phone"},
        "issue_attrs": [issue],
        "conflicting_levels": [22, 23],
        "difficulty": "hard",
        "reference_repair": {"edits": [{"op": "replace_attr", "target": {"resource_id": "phone"},
            "old": "android:gravity", "new": "android:top", "value": "12dp"}]}
    })
}

#[test]
fn empty_manifest_gives_no_records() {
    let dir = tempfile::tempdir().unwrap();
    let kb = common::kb();
    let path = write_manifest(dir.path(), json!([]));
    assert!(load_corpus(&path, &kb).unwrap().is_empty());
}

#[test]
fn manifest_entries_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let kb = common::kb();
    let ok = write_manifest(dir.path(), json!([gravity_entry("android:gravity")]));
    let records = load_corpus(&ok, &kb).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].bug.target_level.0, 31);

    let absent = write_manifest(dir.path(), json!([gravity_entry("android:foreground")]));
    assert!(matches!(
        load_corpus(&absent, &kb),
        Err(CorpusError::Record { .. })
    ));

    let twice = write_manifest(
        dir.path(),
        json!([
            gravity_entry("android:gravity"),
            gravity_entry("android:gravity")
        ]),
    );
    let err = load_corpus(&twice, &kb).unwrap_err();
    assert!(err.to_string().contains("duplicate id"), "{err}");

    let mut odd = gravity_entry("android:gravity");
    odd["surprise"] = json!(1);
    let unknown_field = write_manifest(dir.path(), json!([odd]));
    assert!(load_corpus(&unknown_field, &kb).is_err());

    assert!(load_corpus(&dir.path().join("missing.json"), &kb).is_err());
}

#[test]
fn bundled_corpus_shape() {
    let kb = common::kb();
    let records = common::corpus(&kb);
    assert!(records.len() >= 20);
    for id in ["imageview-foreground-22-23", "seekbar-height-22-23"] {
        common::record(&records, id);
    }
    assert!(!common::subset(&records, Difficulty::Easy).is_empty());
    assert!(!common::subset(&records, Difficulty::Hard).is_empty());
}

#[test]
fn reports_rebuild_from_session_logs() {
    let kb = common::kb();
    let records = common::corpus(&kb);
    let hard = common::subset(&records, Difficulty::Hard);
    let cfg = compat_repair::orchestrator::RepairConfig {
        runs_k: 2,
        ..common::logical_config()
    };
    let (report, logs) = evaluate(
        &hard,
        &kb,
        &common::golden_backend(),
        &cfg,
        &PromptTemplates::bundled(),
    );
    assert_eq!(logs.len(), hard.len() * 2);
    assert_eq!(report_from_sessions(&logs), report);
    let m = &report.methods[0];
    assert_eq!(m.bugs.len(), hard.len());
    assert_eq!(m.metrics.correct_at_k, 1.0);
}
