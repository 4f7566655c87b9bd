//! C interface to the carryover library.
//!
//! All functions return a [`CarryoverStatus`]; on failure a description is
//! available from [`carryover_last_error`] on the same thread. Objects are
//! opaque handles released with their `_free` function. Strings returned
//! through `out` parameters are owned by the caller and must be released
//! with [`carryover_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use carryover::dialog::{build_schema_catalog, dialog_from_json, SchemaCatalog, Slot};
use carryover::embeddings::{EmbeddingTable, LabelEmbeddings};
use carryover::eval::score;
use carryover::model::checkpoint::{label_file_hash, Checkpoint};
use carryover::pipeline::{score_turn, threshold, Pipeline};
use carryover::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CarryoverStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidInput = 5,
    Internal = 6,
}

/// Token embedding table.
pub struct CarryoverEmbeddings {
    table: EmbeddingTable,
}

/// A trained model with the embeddings it was trained against.
pub struct CarryoverPredictor {
    checkpoint: Checkpoint,
    table: EmbeddingTable,
    labels: LabelEmbeddings,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(CarryoverStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io { .. } => CarryoverStatus::Io,
            Error::Parse { .. } | Error::EmbeddingDimension { .. } => CarryoverStatus::Parse,
            Error::NonFiniteLoss { .. } => CarryoverStatus::Internal,
            _ => CarryoverStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CarryoverStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CarryoverStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CarryoverStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(CarryoverStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(CarryoverStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(CarryoverStatus::NullPointer, format!("{name} is null")))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(CarryoverStatus::NullPointer, "output pointer is null".into()));
    }
    out.write(value);
    Ok(())
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(CarryoverStatus::Internal, "output contains a nul byte".into()))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn carryover_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn carryover_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn carryover_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a whitespace-separated token embedding file. Out-of-vocabulary
/// tokens map to the zero vector.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn carryover_embeddings_load(path: *const c_char, out: *mut *mut CarryoverEmbeddings) -> CarryoverStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let table = EmbeddingTable::load(Path::new(path), Default::default())?;
        write_out(out, Box::into_raw(Box::new(CarryoverEmbeddings { table })))
    })
}

/// Embedding dimension, or 0 for a null handle.
///
/// # Safety
/// `emb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn carryover_embeddings_dim(emb: *const CarryoverEmbeddings) -> usize {
    emb.as_ref().map_or(0, |e| e.table.dim())
}

/// Mean embedding of the whitespace tokens of `phrase` into `out[0..len]`;
/// `len` must equal the embedding dimension.
///
/// # Safety
/// `emb` must be a live handle, `phrase` a nul-terminated string and `out`
/// valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn carryover_embeddings_embed_phrase(
    emb: *const CarryoverEmbeddings,
    phrase: *const c_char,
    out: *mut f64,
    len: usize,
) -> CarryoverStatus {
    guard(|| {
        let emb = ref_arg(emb, "embeddings")?;
        let phrase = str_arg(phrase, "phrase")?;
        if out.is_null() {
            return Err(Failure(CarryoverStatus::NullPointer, "output buffer is null".into()));
        }
        if len != emb.table.dim() {
            return Err(Failure(
                CarryoverStatus::InvalidInput,
                format!("buffer length {len} differs from embedding dimension {}", emb.table.dim()),
            ));
        }
        let v = emb.table.embed_phrase(&carryover::dialog::tokenize(phrase))?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&v);
        Ok(())
    })
}

/// # Safety
/// `emb` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn carryover_embeddings_free(emb: *mut CarryoverEmbeddings) {
    if !emb.is_null() {
        drop(Box::from_raw(emb));
    }
}

/// Load a checkpoint together with its token embeddings and label
/// embeddings. Fails if the label file is not the one used in training.
///
/// # Safety
/// Paths must be nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn carryover_predictor_load(
    checkpoint: *const c_char,
    embeddings: *const c_char,
    labels: *const c_char,
    out: *mut *mut CarryoverPredictor,
) -> CarryoverStatus {
    guard(|| {
        let ckpt_path = Path::new(str_arg(checkpoint, "checkpoint")?);
        let emb_path = Path::new(str_arg(embeddings, "embeddings")?);
        let labels_path = Path::new(str_arg(labels, "labels")?);
        let checkpoint = Checkpoint::load(ckpt_path)?;
        if label_file_hash(labels_path)? != checkpoint.label_hash {
            return Err(Failure(
                CarryoverStatus::InvalidInput,
                format!("{} is not the label file the checkpoint was trained with", labels_path.display()),
            ));
        }
        let table = EmbeddingTable::load(emb_path, checkpoint.oov_policy)?;
        let labels = LabelEmbeddings::load(labels_path)?;
        for (what, found) in [("embedding table", table.dim()), ("label embeddings", labels.dim())] {
            if found != checkpoint.model.config.embedding_dim {
                return Err(Error::DimensionMismatch {
                    what: what.into(),
                    expected: checkpoint.model.config.embedding_dim,
                    found,
                }
                .into());
            }
        }
        write_out(out, Box::into_raw(Box::new(CarryoverPredictor { checkpoint, table, labels })))
    })
}

impl CarryoverPredictor {
    fn scored(&self, dialog_json: &str, turn: usize) -> Result<Vec<(carryover::candidates::CandidateSlot, f64)>, Failure> {
        let dialog = dialog_from_json(dialog_json)?;
        let mut catalog: SchemaCatalog = self.checkpoint.catalog.clone();
        catalog.merge(&build_schema_catalog(std::slice::from_ref(&dialog)));
        let pipe = Pipeline {
            table: &self.table,
            labels: &self.labels,
            catalog: &catalog,
            config: &self.checkpoint.candidates,
        };
        Ok(score_turn(&self.checkpoint.model, &pipe, &dialog, turn)?)
    }
}

/// Carried slots of user turn `turn` of a dialog given as one native JSON
/// record, as a JSON array of `{"key", "value"}` objects written to `out`.
///
/// # Safety
/// `predictor` must be a live handle, `dialog_json` a nul-terminated string
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn carryover_predictor_predict(
    predictor: *const CarryoverPredictor,
    dialog_json: *const c_char,
    turn: usize,
    tau: f64,
    out: *mut *mut c_char,
) -> CarryoverStatus {
    guard(|| {
        let p = ref_arg(predictor, "predictor")?;
        let json = str_arg(dialog_json, "dialog_json")?;
        if !(0.0..=1.0).contains(&tau) {
            return Err(Failure(CarryoverStatus::InvalidInput, format!("tau {tau} outside [0, 1]")));
        }
        let slots = threshold(&p.scored(json, turn)?, tau);
        write_out(out, to_c_string(serde_json::to_string(&slots).expect("slots serialize"))?)
    })
}

/// Every candidate of user turn `turn` with its carryover probability, as a
/// JSON array written to `out`.
///
/// # Safety
/// As for [`carryover_predictor_predict`].
#[no_mangle]
pub unsafe extern "C" fn carryover_predictor_score(
    predictor: *const CarryoverPredictor,
    dialog_json: *const c_char,
    turn: usize,
    out: *mut *mut c_char,
) -> CarryoverStatus {
    guard(|| {
        let p = ref_arg(predictor, "predictor")?;
        let json = str_arg(dialog_json, "dialog_json")?;
        let rows: Vec<serde_json::Value> = p
            .scored(json, turn)?
            .into_iter()
            .map(|(c, prob)| {
                let mut v = serde_json::to_value(&c).expect("candidate serializes");
                v["probability"] = prob.into();
                v
            })
            .collect();
        write_out(out, to_c_string(serde_json::Value::Array(rows).to_string())?)
    })
}

/// # Safety
/// `predictor` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn carryover_predictor_free(predictor: *mut CarryoverPredictor) {
    if !predictor.is_null() {
        drop(Box::from_raw(predictor));
    }
}

/// Micro precision, recall and F1 of hypothesis slot sets against reference
/// slot sets. Both inputs are JSON arrays (one entry per turn) of arrays of
/// `{"key", "value"}`; the report is written to `out` as JSON.
///
/// # Safety
/// Inputs must be nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn carryover_score_json(
    hypotheses: *const c_char,
    references: *const c_char,
    out: *mut *mut c_char,
) -> CarryoverStatus {
    guard(|| {
        let parse = |text: &str, name: &str| -> Result<Vec<Vec<Slot>>, Failure> {
            serde_json::from_str(text).map_err(|e| Failure(CarryoverStatus::Parse, format!("{name}: {e}")))
        };
        let hyps = parse(str_arg(hypotheses, "hypotheses")?, "hypotheses")?;
        let refs = parse(str_arg(references, "references")?, "references")?;
        let report = score(&hyps, &refs)?;
        write_out(out, to_c_string(serde_json::to_string(&report).expect("report serializes"))?)
    })
}
