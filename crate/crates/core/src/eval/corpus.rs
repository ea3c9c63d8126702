use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{judge, Judgment};
use crate::fitness::CompatBug;
use crate::kb::{render, ApiLevel, KnowledgeBase, RenderState};
use crate::xml::{apply_patch, parse_document, AttrName, ElementLocator, Patch, XmlElement};

pub const CORPUS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    /// Repairable by a single one-line patch.
    Easy,
    Hard,
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "easy",
            Difficulty::Hard => "hard",
        })
    }
}

/// One manifest entry as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest.
    pub fixture: String,
    pub locator: ElementLocator,
    pub issue_attrs: Vec<AttrName>,
    pub conflicting_levels: (ApiLevel, ApiLevel),
    #[serde(default = "default_target")]
    pub target_level: ApiLevel,
    pub difficulty: Difficulty,
    #[serde(default)]
    pub notes: String,
    /// A known-good repair; must make the fixture behave the same on both
    /// conflicting levels and be judged correct.
    pub reference_repair: Patch,
}

fn default_target() -> ApiLevel {
    ApiLevel(31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub bugs: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BugRecord {
    pub id: String,
    pub fixture: PathBuf,
    pub bug: CompatBug,
    pub difficulty: Difficulty,
    pub notes: String,
    pub reference_repair: Patch,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("corpus manifest: {0}")]
    Manifest(String),
    #[error("corpus record `{id}`: {reason}")]
    Record { id: String, reason: String },
}

fn record_err(id: &str, reason: impl Into<String>) -> CorpusError {
    CorpusError::Record {
        id: id.to_string(),
        reason: reason.into(),
    }
}

macro_rules! bundled_fixtures {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../assets/corpus/fixtures/", $name)))),*]
    };
}

const BUNDLED_MANIFEST: &str = include_str!("../../assets/corpus/manifest.json");
const BUNDLED_FIXTURES: &[(&str, &str)] = bundled_fixtures!(
    "button_drawabletint.xml",
    "edittext_gravity.xml",
    "edittext_gravity_amount.xml",
    "edittext_gravity_bottom.xml",
    "imagebutton_foreground.xml",
    "imagebutton_src.xml",
    "imagebutton_tooltip.xml",
    "imageview_background.xml",
    "imageview_foreground.xml",
    "imageview_foreground_album.xml",
    "imageview_src.xml",
    "scrollview_fadingedge.xml",
    "seekbar_height.xml",
    "seekbar_volume.xml",
    "textview_autosize_max.xml",
    "textview_autosize_min.xml",
    "textview_autosize_min_caption.xml",
    "textview_autosize_type.xml",
    "textview_drawabletint.xml",
    "textview_drawabletint_pair.xml",
    "textview_drawabletintmode.xml",
    "textview_fontfamily.xml",
);

/// The corpus shipped with the crate.
pub fn bundled_corpus(kb: &KnowledgeBase) -> Result<Vec<BugRecord>, CorpusError> {
    load_corpus_with(BUNDLED_MANIFEST, Path::new("fixtures"), kb, |rel| {
        let name = rel.strip_prefix("fixtures/").unwrap_or(rel);
        BUNDLED_FIXTURES
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| text.to_string())
            .ok_or_else(|| format!("no bundled fixture `{rel}`"))
    })
}

/// Loads a manifest and its fixtures (paths relative to the manifest) and
/// checks every record; see [`validate_record`].
pub fn load_corpus(manifest: &Path, kb: &KnowledgeBase) -> Result<Vec<BugRecord>, CorpusError> {
    let text = std::fs::read_to_string(manifest)
        .map_err(|e| CorpusError::Manifest(format!("{}: {e}", manifest.display())))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    load_corpus_with(&text, base, kb, |rel| {
        std::fs::read_to_string(base.join(rel))
            .map_err(|e| format!("{}: {e}", base.join(rel).display()))
    })
}

/// Loads one bug described by a single manifest entry (fixture path
/// relative to the file).
pub fn load_bug_file(path: &Path, kb: &KnowledgeBase) -> Result<BugRecord, CorpusError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CorpusError::Manifest(format!("{}: {e}", path.display())))?;
    let entry: ManifestEntry = serde_json::from_str(&text)
        .map_err(|e| CorpusError::Manifest(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let fixture = base.join(&entry.fixture);
    let text = std::fs::read_to_string(&fixture)
        .map_err(|e| record_err(&entry.id, format!("{}: {e}", fixture.display())))?;
    let document = parse_document(&text).map_err(|e| record_err(&entry.id, e.to_string()))?;
    let record = build_record(entry, document, base)?;
    validate_record(&record, kb)?;
    Ok(record)
}

fn load_corpus_with(
    manifest: &str,
    base: &Path,
    kb: &KnowledgeBase,
    read: impl Fn(&str) -> Result<String, String>,
) -> Result<Vec<BugRecord>, CorpusError> {
    let m: Manifest =
        serde_json::from_str(manifest).map_err(|e| CorpusError::Manifest(e.to_string()))?;
    if m.schema_version != CORPUS_SCHEMA_VERSION {
        return Err(CorpusError::Manifest(format!(
            "unsupported schema version {}",
            m.schema_version
        )));
    }
    let mut seen = BTreeSet::new();
    let mut records = Vec::with_capacity(m.bugs.len());
    for entry in m.bugs {
        if !seen.insert(entry.id.clone()) {
            return Err(record_err(&entry.id, "duplicate id"));
        }
        let text = read(&entry.fixture).map_err(|e| record_err(&entry.id, e))?;
        let document = parse_document(&text).map_err(|e| record_err(&entry.id, e.to_string()))?;
        let record = build_record(entry, document, base)?;
        validate_record(&record, kb)?;
        records.push(record);
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(records)
}

fn build_record(
    entry: ManifestEntry,
    document: XmlElement,
    base: &Path,
) -> Result<BugRecord, CorpusError> {
    let bug = CompatBug::new(
        document,
        entry.locator,
        entry.issue_attrs,
        entry.conflicting_levels,
        entry.target_level,
    )
    .map_err(|e| record_err(&entry.id, e.to_string()))?;
    Ok(BugRecord {
        fixture: base.join(&entry.fixture),
        id: entry.id,
        bug,
        difficulty: entry.difficulty,
        notes: entry.notes,
        reference_repair: entry.reference_repair,
    })
}

fn same_behavior(a: &RenderState, b: &RenderState) -> bool {
    a.elements == b.elements && a.crashes.len() == b.crashes.len()
}

/// A record is usable when its levels are within the KB's range, the
/// fixture behaves differently on the two conflicting levels, and the
/// reference repair removes the difference and is judged correct.
pub fn validate_record(record: &BugRecord, kb: &KnowledgeBase) -> Result<(), CorpusError> {
    let id = &record.id;
    let bug = &record.bug;
    let bounds = kb.levels();
    for l in bug.levels() {
        if !bounds.contains(l) {
            return Err(record_err(
                id,
                format!("API level {l} is outside {}..={}", bounds.min, bounds.max),
            ));
        }
    }
    let (low, high) = bug.conflicting_levels;
    if same_behavior(
        &render(&bug.document, low, kb),
        &render(&bug.document, high, kb),
    ) {
        return Err(record_err(
            id,
            format!("bug does not manifest between API {low} and {high}"),
        ));
    }
    let repaired = apply_patch(&bug.document, &record.reference_repair)
        .map_err(|e| record_err(id, format!("reference repair does not apply: {e}")))?;
    if !same_behavior(&render(&repaired, low, kb), &render(&repaired, high, kb)) {
        return Err(record_err(
            id,
            "reference repair still behaves differently across the conflicting levels",
        ));
    }
    match judge(&repaired, bug, kb) {
        Judgment::Correct => Ok(()),
        other => Err(record_err(
            id,
            format!("reference repair is judged {other}"),
        )),
    }
}
