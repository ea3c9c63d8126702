//! C interface to the layout model, the rendering oracle and the repair
//! loop. Objects are opaque handles released with their `*_free`
//! function; strings returned through out-parameters are owned by the
//! caller and released with [`crp_string_free`]. Every function returns a
//! [`CrpStatus`]; on failure [`crp_last_error_message`] describes the error.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use compat_repair::agents::{PromptTemplates, ScriptedBackend};
use compat_repair::eval::{bundled_corpus, derive_seed, judge, Judgment};
use compat_repair::kb::{render, ApiLevel, KnowledgeBase};
use compat_repair::orchestrator::{
    repair_bug, ClockMode, RepairConfig, RepairOutcome, RepairRequest,
};
use compat_repair::xml::{parse_document, serialize_canonical, XmlElement};

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    KbError = 4,
    CorpusError = 5,
    BackendError = 6,
    InvalidArgument = 7,
    Panic = 8,
}

/// Attribute knowledge base.
pub struct CrpKb(KnowledgeBase);

/// Parsed layout document.
pub struct CrpDocument(XmlElement);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul bytes removed"));
}

struct Fail(CrpStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CrpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CrpStatus::Ok
        }
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CrpStatus::Panic
        }
    }
}

unsafe fn text_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(CrpStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CrpStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail(CrpStatus::NullArgument, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: *mut T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(
            CrpStatus::NullArgument,
            "output pointer is null".into(),
        ));
    }
    *out = value;
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|_| {
        Fail(
            CrpStatus::InvalidArgument,
            "output contains a nul byte".into(),
        )
    })?;
    put(out, c.into_raw())
}

/// Message of the last failed call on this thread; empty after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn crp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a knowledge base from a JSON file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crp_kb_load(path: *const c_char, out: *mut *mut CrpKb) -> CrpStatus {
    guard(|| {
        let path = text_arg(path, "path")?;
        let kb = KnowledgeBase::load(Path::new(path))
            .map_err(|e| Fail(CrpStatus::KbError, e.to_string()))?;
        put(out, Box::into_raw(Box::new(CrpKb(kb))))
    })
}

/// The knowledge base bundled with the library.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crp_kb_load_default(out: *mut *mut CrpKb) -> CrpStatus {
    guard(|| {
        put(
            out,
            Box::into_raw(Box::new(CrpKb(KnowledgeBase::bundled()))),
        )
    })
}

/// # Safety
/// `kb` must come from a `crp_kb_load*` call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn crp_kb_free(kb: *mut CrpKb) {
    if !kb.is_null() {
        drop(Box::from_raw(kb));
    }
}

/// Parses a layout document.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crp_document_parse(
    text: *const c_char,
    out: *mut *mut CrpDocument,
) -> CrpStatus {
    guard(|| {
        let text = text_arg(text, "text")?;
        let doc = parse_document(text).map_err(|e| Fail(CrpStatus::ParseError, e.to_string()))?;
        put(out, Box::into_raw(Box::new(CrpDocument(doc))))
    })
}

/// Canonical text of a document.
///
/// # Safety
/// `doc` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crp_document_canonical(
    doc: *const CrpDocument,
    out: *mut *mut c_char,
) -> CrpStatus {
    guard(|| {
        let doc = ref_arg(doc, "doc")?;
        put_string(out, serialize_canonical(&doc.0))
    })
}

/// # Safety
/// `doc` must come from [`crp_document_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn crp_document_free(doc: *mut CrpDocument) {
    if !doc.is_null() {
        drop(Box::from_raw(doc));
    }
}

/// Renders a document at one API level; the result is the render state
/// as JSON.
///
/// # Safety
/// `doc` and `kb` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crp_render_json(
    doc: *const CrpDocument,
    kb: *const CrpKb,
    level: u8,
    out: *mut *mut c_char,
) -> CrpStatus {
    guard(|| {
        let doc = ref_arg(doc, "doc")?;
        let kb = ref_arg(kb, "kb")?;
        let bounds = kb.0.levels();
        if !bounds.contains(ApiLevel(level)) {
            return Err(Fail(
                CrpStatus::InvalidArgument,
                format!(
                    "API level {level} is outside {}..={}",
                    bounds.min, bounds.max
                ),
            ));
        }
        let state = render(&doc.0, ApiLevel(level), &kb.0);
        put_string(
            out,
            serde_json::to_string(&state).expect("render states serialize"),
        )
    })
}

#[derive(serde::Serialize)]
struct RepairResult<'a> {
    bug_id: &'a str,
    seed: u64,
    judgment: Judgment,
    outcome: &'a RepairOutcome,
}

/// Repairs a bug of the bundled corpus once (run 0) with a scripted
/// backend and a logical clock. `script_json` is a script file's content,
/// or null for a backend with no replies. The result is JSON with the
/// outcome and its judgment.
///
/// # Safety
/// `kb` must be a live handle, `bug_id` a nul-terminated string,
/// `script_json` null or a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn crp_repair_bug_json(
    kb: *const CrpKb,
    bug_id: *const c_char,
    script_json: *const c_char,
    seed: u64,
    out: *mut *mut c_char,
) -> CrpStatus {
    guard(|| {
        let kb = &ref_arg(kb, "kb")?.0;
        let bug_id = text_arg(bug_id, "bug_id")?;
        let backend = if script_json.is_null() {
            ScriptedBackend::new(Vec::new())
        } else {
            ScriptedBackend::from_json(text_arg(script_json, "script_json")?)
                .map_err(|e| Fail(CrpStatus::BackendError, e.to_string()))?
        };
        let corpus = bundled_corpus(kb).map_err(|e| Fail(CrpStatus::CorpusError, e.to_string()))?;
        let record = corpus.iter().find(|r| r.id == bug_id).ok_or_else(|| {
            Fail(
                CrpStatus::CorpusError,
                format!("no bug `{bug_id}` in the bundled corpus"),
            )
        })?;
        let cfg = RepairConfig {
            seed,
            clock: ClockMode::Logical,
            ..RepairConfig::default()
        };
        let run_seed = derive_seed(seed, bug_id, 0);
        let req = RepairRequest {
            bug_id,
            run: 0,
            bug: &record.bug,
            seed: run_seed,
        };
        let (outcome, _) = repair_bug(&req, kb, &backend, &cfg, &PromptTemplates::bundled());
        if let Some(e) = &outcome.backend_error {
            return Err(Fail(CrpStatus::BackendError, e.clone()));
        }
        let result = RepairResult {
            bug_id,
            seed: run_seed,
            judgment: judge(&outcome.final_document, &record.bug, kb),
            outcome: &outcome,
        };
        put_string(
            out,
            serde_json::to_string(&result).expect("outcomes serialize"),
        )
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn crp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
