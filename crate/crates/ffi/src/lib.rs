//! C ABI over the stance core: load a trained model and predict from dense
//! feature rows, score prediction lists, compute mutual information and
//! fuse member probabilities.
//!
//! Every function returns a status code (`STANCE_OK` on success). On
//! failure the message is kept per thread and can be read with
//! [`stance_last_error`]. Stances cross the boundary as their canonical
//! indices: agree 0, disagree 1, discuss 2, unrelated 3.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use stance::ensemble::fuse_summation;
use stance::eval::{confusion, fnc_score};
use stance::features::FeatureVector;
use stance::keywords::{mutual_information, ContingencyTable};
use stance::mlp::{load_model, MlpModel, ProbabilityVector};
use stance::{Error, Stance};

pub const STANCE_OK: i32 = 0;
pub const STANCE_ERR_NULL: i32 = 1;
pub const STANCE_ERR_ARGUMENT: i32 = 2;
pub const STANCE_ERR_DATA: i32 = 3;
pub const STANCE_ERR_MODEL: i32 = 4;
pub const STANCE_ERR_PANIC: i32 = 5;

/// Opaque handle to a loaded model.
pub struct StanceModel {
    model: MlpModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(code: i32, msg: impl Into<String>) -> i32 {
    set_error(msg.into());
    code
}

fn from_core(e: Error) -> i32 {
    let code = match e.exit_code() {
        2 => STANCE_ERR_ARGUMENT,
        3 => STANCE_ERR_DATA,
        _ => STANCE_ERR_MODEL,
    };
    fail(code, e.to_string())
}

/// Runs `f`, turning panics into `STANCE_ERR_PANIC`.
fn guard(f: impl FnOnce() -> i32) -> i32 {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => fail(STANCE_ERR_PANIC, "internal panic"),
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(STANCE_ERR_NULL, concat!(stringify!($p), " is null"));
        })+
    };
}

unsafe fn stances(xs: *const i32, n: usize, what: &str) -> Result<Vec<Stance>, i32> {
    let raw = if n == 0 { &[][..] } else { std::slice::from_raw_parts(xs, n) };
    raw.iter()
        .enumerate()
        .map(|(k, &v)| {
            usize::try_from(v)
                .ok()
                .and_then(Stance::from_index)
                .ok_or_else(|| fail(STANCE_ERR_ARGUMENT, format!("{what}[{k}] = {v} is not a stance index")))
        })
        .collect()
}

unsafe fn pairs(truth: *const i32, predicted: *const i32, n: usize) -> Result<Vec<(Stance, Stance)>, i32> {
    let t = stances(truth, n, "truth")?;
    let p = stances(predicted, n, "predicted")?;
    Ok(t.into_iter().zip(p).collect())
}

/// Message for the most recent failure on this thread, or null. The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn stance_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a model file written by `stance train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stance_model_load(path: *const c_char, out: *mut *mut StanceModel) -> i32 {
    guard(|| {
        non_null!(path, out);
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(STANCE_ERR_ARGUMENT, "path is not UTF-8");
        };
        match load_model(path) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(StanceModel { model }));
                STANCE_OK
            }
            Err(e) => from_core(e),
        }
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`stance_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn stance_model_free(model: *mut StanceModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input dimension of the model, 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stance_model_input_dim(model: *const StanceModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.input_dim())
}

/// Predicts one dense feature row of length `len`. Writes four class
/// probabilities to `probs` and the decided stance index to `stance`.
///
/// # Safety
/// `features` must hold `len` doubles, `probs` room for 4.
#[no_mangle]
pub unsafe extern "C" fn stance_model_predict(
    model: *const StanceModel,
    features: *const f64,
    len: usize,
    probs: *mut f64,
    stance: *mut i32,
) -> i32 {
    guard(|| {
        non_null!(model, features, probs, stance);
        let m = &(*model).model;
        let values = std::slice::from_raw_parts(features, len);
        let result = FeatureVector::from_dense(m.layout().clone(), values).and_then(|x| m.predict(&x));
        match result {
            Ok((s, p)) => {
                std::slice::from_raw_parts_mut(probs, 4).copy_from_slice(p.values());
                *stance = s.index() as i32;
                STANCE_OK
            }
            Err(e) => from_core(e),
        }
    })
}

/// FNC grade and maximum grade of `n` (truth, predicted) stance pairs.
///
/// # Safety
/// `truth` and `predicted` must hold `n` ints each.
#[no_mangle]
pub unsafe extern "C" fn stance_fnc_score(
    truth: *const i32,
    predicted: *const i32,
    n: usize,
    grade: *mut f64,
    max_grade: *mut f64,
) -> i32 {
    guard(|| {
        non_null!(truth, predicted, grade, max_grade);
        let pairs = match pairs(truth, predicted, n) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match fnc_score(&pairs) {
            Ok((g, m)) => {
                *grade = g;
                *max_grade = m;
                STANCE_OK
            }
            Err(e) => from_core(e),
        }
    })
}

/// 4x4 confusion counts, row = true stance, column = predicted, written
/// row-major into `counts` (16 entries).
///
/// # Safety
/// `truth` and `predicted` must hold `n` ints each, `counts` room for 16.
#[no_mangle]
pub unsafe extern "C" fn stance_confusion(
    truth: *const i32,
    predicted: *const i32,
    n: usize,
    counts: *mut u64,
) -> i32 {
    guard(|| {
        non_null!(truth, predicted, counts);
        let pairs = match pairs(truth, predicted, n) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match confusion(&pairs) {
            Ok(m) => {
                let out = std::slice::from_raw_parts_mut(counts, 16);
                for (k, slot) in out.iter_mut().enumerate() {
                    *slot = m.counts[k / 4][k % 4];
                }
                STANCE_OK
            }
            Err(e) => from_core(e),
        }
    })
}

/// Mutual information in bits between term presence and a binary class.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stance_mutual_information(n11: u64, n10: u64, n01: u64, n00: u64, out: *mut f64) -> i32 {
    guard(|| {
        non_null!(out);
        match mutual_information(&ContingencyTable::new(n11, n10, n01, n00)) {
            Ok(v) => {
                *out = v;
                STANCE_OK
            }
            Err(e) => from_core(e),
        }
    })
}

/// Averages `n_members` probability vectors (4 doubles each, contiguous)
/// and writes the fused vector and decided stance.
///
/// # Safety
/// `members` must hold `4 * n_members` doubles, `probs` room for 4.
#[no_mangle]
pub unsafe extern "C" fn stance_fuse_summation(
    members: *const f64,
    n_members: usize,
    probs: *mut f64,
    stance: *mut i32,
) -> i32 {
    guard(|| {
        non_null!(members, probs, stance);
        let raw = std::slice::from_raw_parts(members, 4 * n_members);
        let vectors: Result<Vec<ProbabilityVector>, Error> = raw
            .chunks_exact(4)
            .map(|c| ProbabilityVector::new([c[0], c[1], c[2], c[3]]))
            .collect();
        match vectors.and_then(|v| fuse_summation(&v)) {
            Ok(f) => {
                std::slice::from_raw_parts_mut(probs, 4).copy_from_slice(f.fused.values());
                *stance = f.decided.index() as i32;
                STANCE_OK
            }
            Err(e) => from_core(e),
        }
    })
}
