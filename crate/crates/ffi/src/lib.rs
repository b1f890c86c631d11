//! C ABI over the semrec engine.
//!
//! Every fallible call returns a [`SemrecStatus`]; on failure the message is
//! available from [`semrec_last_error_message`] on the same thread. Handles
//! are opaque and owned by the caller, who releases them with the matching
//! `*_free` function. Strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use semrec::graph::{load_dataset, load_schema, SemanticDataset};
use semrec::index::{IndexParams, RecommenderIndex, Source};
use semrec::model::LatentModel;
use semrec::pipeline::{build_model, BuildOptions};
use semrec::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemrecStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad argument, malformed input, unknown entity, out-of-range weight.
    Invalid = 2,
    Io = 3,
    NotConverged = 4,
    Stale = 5,
    MissingArtifact = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

/// A loaded dataset.
pub struct SemrecDataset(SemanticDataset);

/// A latent model plus C copies of its entity names.
pub struct SemrecModel {
    model: LatentModel,
    names: Vec<(CString, CString)>,
}

pub struct SemrecIndex(RecommenderIndex);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NUL bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SemrecStatus {
    match e {
        Error::Io { .. } => SemrecStatus::Io,
        Error::NotConverged { .. } => SemrecStatus::NotConverged,
        Error::Stale(_) => SemrecStatus::Stale,
        Error::MissingArtifact { .. } => SemrecStatus::MissingArtifact,
        _ => SemrecStatus::Invalid,
    }
}

struct Fail(SemrecStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SemrecStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, records any failure, and converts panics into `Internal`.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SemrecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SemrecStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            SemrecStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SemrecStatus::Invalid, format!("`{what}` is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn check_out<T>(p: *mut T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(null(what))
    } else {
        Ok(())
    }
}

fn wrap_model(model: LatentModel) -> Result<*mut SemrecModel, Fail> {
    let names = (0..model.n())
        .map(|r| {
            let (t, id) = model.layout().entity_of(r).expect("row in layout");
            let c = |s: &str| CString::new(s).map_err(|_| Fail(SemrecStatus::Invalid, format!("entity name `{s}` has a NUL byte")));
            Ok((c(t)?, c(id)?))
        })
        .collect::<Result<Vec<_>, Fail>>()?;
    Ok(Box::into_raw(Box::new(SemrecModel { model, names })))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next semrec call on this thread.
#[no_mangle]
pub extern "C" fn semrec_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn semrec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a schema file and an edge file.
///
/// # Safety
/// Paths must be valid NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semrec_dataset_load(
    schema_path: *const c_char,
    data_path: *const c_char,
    out: *mut *mut SemrecDataset,
) -> SemrecStatus {
    guard(|| {
        check_out(out, "out")?;
        let schema = load_schema(Path::new(str_arg(schema_path, "schema_path")?))?;
        let ds = load_dataset(schema, Path::new(str_arg(data_path, "data_path")?))?;
        *out = Box::into_raw(Box::new(SemrecDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from `semrec_dataset_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn semrec_dataset_free(dataset: *mut SemrecDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Builds a rank-`k` model with default normalization, unit weights, star
/// reduction and the truncated kernel.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semrec_model_build(
    dataset: *const SemrecDataset,
    k: usize,
    seed: u64,
    out: *mut *mut SemrecModel,
) -> SemrecStatus {
    guard(|| {
        check_out(out, "out")?;
        let ds = handle(dataset, "dataset")?;
        let opts = BuildOptions {
            k,
            seed,
            ..BuildOptions::default()
        };
        *out = wrap_model(build_model(&ds.0, &opts)?)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a valid string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semrec_model_load(path: *const c_char, out: *mut *mut SemrecModel) -> SemrecStatus {
    guard(|| {
        check_out(out, "out")?;
        *out = wrap_model(LatentModel::load(Path::new(str_arg(path, "path")?))?)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn semrec_model_save(model: *const SemrecModel, path: *const c_char) -> SemrecStatus {
    guard(|| {
        handle(model, "model")?.model.save(Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn semrec_model_free(model: *mut SemrecModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of latent dimensions; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn semrec_model_k(model: *const SemrecModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.k())
}

/// Number of entities (rows); 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn semrec_model_n(model: *const SemrecModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.n())
}

/// Type and id of entity `row`. The strings belong to the model handle.
///
/// # Safety
/// `model` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn semrec_model_entity(
    model: *const SemrecModel,
    row: usize,
    out_type: *mut *const c_char,
    out_id: *mut *const c_char,
) -> SemrecStatus {
    guard(|| {
        check_out(out_type, "out_type")?;
        check_out(out_id, "out_id")?;
        let m = handle(model, "model")?;
        let (t, id) = m
            .names
            .get(row)
            .ok_or_else(|| Fail(SemrecStatus::Invalid, format!("row {row} out of range (n = {})", m.names.len())))?;
        *out_type = t.as_ptr();
        *out_id = id.as_ptr();
        Ok(())
    })
}

/// Predicted score between two entities on the normalized scale.
///
/// # Safety
/// `model` must be a live handle, the strings valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn semrec_model_predict(
    model: *const SemrecModel,
    type_a: *const c_char,
    id_a: *const c_char,
    type_b: *const c_char,
    id_b: *const c_char,
    out: *mut f64,
) -> SemrecStatus {
    guard(|| {
        check_out(out, "out")?;
        let m = handle(model, "model")?;
        let a = (str_arg(type_a, "type_a")?, str_arg(id_a, "id_a")?);
        let b = (str_arg(type_b, "type_b")?, str_arg(id_b, "id_b")?);
        *out = m.model.predict(a, b)?;
        Ok(())
    })
}

/// Indexes every non-auxiliary entity of `model`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semrec_index_build(
    model: *const SemrecModel,
    branching: usize,
    capacity: usize,
    seed: u64,
    out: *mut *mut SemrecIndex,
) -> SemrecStatus {
    guard(|| {
        check_out(out, "out")?;
        let m = handle(model, "model")?;
        let params = IndexParams {
            branching,
            capacity,
            seed,
        };
        *out = Box::into_raw(Box::new(SemrecIndex(RecommenderIndex::build(&m.model, &[], params)?)));
        Ok(())
    })
}

/// # Safety
/// `index` must come from `semrec_index_build` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn semrec_index_free(index: *mut SemrecIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Top-`k` entities for the source entity, which is itself excluded.
/// Writes up to `k` rows and scores, best first, and the count to
/// `out_len`; `out_truncated` is set when fewer than `k` were available.
///
/// # Safety
/// `index` must have been built from `model`; `out_rows` and `out_scores`
/// must hold `k` elements; the other out pointers must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn semrec_index_query(
    index: *const SemrecIndex,
    model: *const SemrecModel,
    source_type: *const c_char,
    source_id: *const c_char,
    k: usize,
    budget: usize,
    out_rows: *mut usize,
    out_scores: *mut f64,
    out_len: *mut usize,
    out_truncated: *mut bool,
) -> SemrecStatus {
    guard(|| {
        check_out(out_rows, "out_rows")?;
        check_out(out_scores, "out_scores")?;
        check_out(out_len, "out_len")?;
        check_out(out_truncated, "out_truncated")?;
        let idx = handle(index, "index")?;
        let m = handle(model, "model")?;
        let (t, id) = (str_arg(source_type, "source_type")?, str_arg(source_id, "source_id")?);
        let own = m.model.layout().row_of(t, id)?;
        let rec = idx.0.query(&m.model, Source::Entity(t, id), k, budget, &[own].into())?;
        for (i, s) in rec.items.iter().enumerate() {
            *out_rows.add(i) = s.row;
            *out_scores.add(i) = s.score;
        }
        *out_len = rec.items.len();
        *out_truncated = rec.truncated;
        Ok(())
    })
}
