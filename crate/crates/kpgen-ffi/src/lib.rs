//! C ABI for the keyphrase generation toolkit.
//!
//! Models are opaque handles; strings returned by this library are owned by
//! the caller and must be released with `kpg_string_free`. On failure the
//! functions return an error status (or NULL for string-returning calls) and
//! store a message retrievable via `kpg_last_error`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::Path;

use libc::{c_char, size_t};

use kpgen::corpus::encode_source_tokens;
use kpgen::decode::{exhaustive_decode, self_terminating_decode, DecodeResult, Strategy};
use kpgen::error::KpError;
use kpgen::eval::evaluate_dataset;
use kpgen::text::normalize_and_tokenize;
use kpgen::train::{load_checkpoint, Checkpoint};

/// Status codes returned by fallible calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KpgStatus {
    Ok = 0,
    InvalidArgument = 1,
    IoError = 2,
    ParseError = 3,
    Mismatch = 4,
    InternalError = 5,
}

/// Opaque model handle: a loaded checkpoint (parameters + vocabulary).
pub struct KpgModel {
    checkpoint: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', "?")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &KpError) -> KpgStatus {
    match err {
        KpError::Io { .. } => KpgStatus::IoError,
        KpError::JsonLine { .. }
        | KpError::MissingField { .. }
        | KpError::Xml { .. }
        | KpError::InvalidInput(_)
        | KpError::Shape(_) => KpgStatus::ParseError,
        KpError::Checkpoint(_) | KpError::VocabMismatch(_) | KpError::IdMismatch(_) => {
            KpgStatus::Mismatch
        }
        KpError::Divergence(_) | KpError::NonFinite(_) => KpgStatus::InternalError,
    }
}

/// # Safety
/// `s` must be NULL or a valid NUL-terminated string.
unsafe fn required_str<'a>(s: *const c_char, name: &str) -> Result<&'a str, KpgStatus> {
    if s.is_null() {
        set_error(format!("{name} must not be NULL"));
        return Err(KpgStatus::InvalidArgument);
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error(format!("{name} is not valid UTF-8"));
        KpgStatus::InvalidArgument
    })
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', "?")).map_or(std::ptr::null_mut(), CString::into_raw)
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn kpg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent error on this thread, or NULL. The caller owns
/// the returned string (release with `kpg_string_free`).
#[no_mangle]
pub extern "C" fn kpg_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map(|c| c.clone().into_raw())
            .unwrap_or(std::ptr::null_mut())
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a pointer previously returned by a kpg_* call, not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn kpg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a checkpoint file into an opaque model handle.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out_model` must point to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn kpg_model_load(
    path: *const c_char,
    out_model: *mut *mut KpgModel,
) -> KpgStatus {
    clear_error();
    if out_model.is_null() {
        set_error("out_model must not be NULL".into());
        return KpgStatus::InvalidArgument;
    }
    let path = match required_str(path, "path") {
        Ok(p) => p,
        Err(s) => return s,
    };
    match load_checkpoint(Path::new(path)) {
        Ok(checkpoint) => {
            *out_model = Box::into_raw(Box::new(KpgModel { checkpoint }));
            KpgStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            *out_model = std::ptr::null_mut();
            status_of(&e)
        }
    }
}

/// Release a model handle.
///
/// # Safety
/// `model` must be NULL or a pointer returned by `kpg_model_load`, not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn kpg_model_free(model: *mut KpgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of learned parameters.
///
/// # Safety
/// `model` must be a live handle from `kpg_model_load`.
#[no_mangle]
pub unsafe extern "C" fn kpg_model_param_count(model: *const KpgModel) -> size_t {
    if model.is_null() {
        return 0;
    }
    (*model).checkpoint.params.param_count()
}

/// Vocabulary size (including reserved tokens).
///
/// # Safety
/// `model` must be a live handle from `kpg_model_load`.
#[no_mangle]
pub unsafe extern "C" fn kpg_model_vocab_size(model: *const KpgModel) -> size_t {
    if model.is_null() {
        return 0;
    }
    (*model).checkpoint.vocab.len()
}

fn predict(
    model: &KpgModel,
    text: &str,
    strategy: Strategy,
    beam: usize,
    max_len: usize,
) -> Result<DecodeResult, KpError> {
    let tokens = normalize_and_tokenize(text);
    if tokens.is_empty() {
        return Err(KpError::InvalidInput("source text is empty".into()));
    }
    let ex = encode_source_tokens("ffi", &tokens, &model.checkpoint.vocab);
    match strategy {
        Strategy::Exhaustive => exhaustive_decode(
            &model.checkpoint.params,
            &model.checkpoint.vocab,
            &ex,
            beam.max(1),
            max_len.max(1),
            false,
        ),
        mode => self_terminating_decode(
            &model.checkpoint.params,
            &model.checkpoint.vocab,
            &ex,
            mode,
            beam.max(1),
            max_len.max(1),
            false,
        ),
    }
}

/// Decode keyphrases for one source text. `strategy` is "greedy",
/// "top-beam" or "exhaustive". Returns a JSON object
/// `{"phrases": [...], "scores": [...], "strategy": "..."}`
/// or NULL on error.
///
/// # Safety
/// `model` must be a live handle; `text` and `strategy` must be valid
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn kpg_model_predict_json(
    model: *const KpgModel,
    text: *const c_char,
    strategy: *const c_char,
    beam: size_t,
    max_len: size_t,
) -> *mut c_char {
    clear_error();
    if model.is_null() {
        set_error("model must not be NULL".into());
        return std::ptr::null_mut();
    }
    let text = match required_str(text, "text") {
        Ok(t) => t,
        Err(_) => return std::ptr::null_mut(),
    };
    let strategy = match required_str(strategy, "strategy") {
        Ok(s) => s,
        Err(_) => return std::ptr::null_mut(),
    };
    let strategy: Strategy = match strategy.parse() {
        Ok(s) => s,
        Err(e) => {
            set_error(e);
            return std::ptr::null_mut();
        }
    };
    match predict(&*model, text, strategy, beam, max_len) {
        Ok(result) => {
            let body = serde_json::json!({
                "phrases": result.surfaces(),
                "scores": result.phrases.iter().map(|p| p.score).collect::<Vec<f64>>(),
                "strategy": result.strategy.to_string(),
            });
            into_c_string(body.to_string())
        }
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Score a prediction JSONL file against a gold dataset JSONL file. Returns
/// the metric report as JSON, or NULL on error.
///
/// # Safety
/// Both paths must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn kpg_evaluate_files_json(
    pred_path: *const c_char,
    gold_path: *const c_char,
) -> *mut c_char {
    clear_error();
    let pred = match required_str(pred_path, "pred_path") {
        Ok(p) => p,
        Err(_) => return std::ptr::null_mut(),
    };
    let gold = match required_str(gold_path, "gold_path") {
        Ok(p) => p,
        Err(_) => return std::ptr::null_mut(),
    };
    let run = || -> Result<String, KpError> {
        let gold_docs = kpgen::corpus::load_jsonl(Path::new(gold))?.docs;
        let preds = kpgen::cli::load_predictions(Path::new(pred))?;
        let report = evaluate_dataset(&gold_docs, &preds, &[])?;
        Ok(serde_json::to_string(&report).expect("serializable report"))
    };
    match run() {
        Ok(json) => into_c_string(json),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}
