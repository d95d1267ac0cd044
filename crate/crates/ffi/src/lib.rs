//! C ABI for the online local learning library.
//!
//! Matrices cross the boundary as row-major `double` arrays of length
//! `side * side` with `side = n * L`. Objects are opaque handles released
//! with their `_free` function. Every fallible call returns an [`LrStatus`];
//! on failure [`lr_last_error_message`] describes the error for the calling
//! thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;

use local_regret::polytope::{is_feasible, project, uniform_matrix, FeasibilityTolerance, ProjectionOptions};
use local_regret::regularizer::{eval, inv_hessian_quadform};
use local_regret::rng::{stream, StreamRng};
use local_regret::{choose_nu, Error, FtrlState, InnerSolverConfig, PayoffFunction, ProblemDims, PseudoMomentMatrix};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotPositiveDefinite = 4,
    TooLarge = 5,
    NonFinite = 6,
    Internal = 7,
    Panic = 8,
}

/// A matrix on the pseudo-moment polytope (or a raw candidate).
pub struct LrMatrix {
    inner: PseudoMomentMatrix,
}

/// An FTRL learner with its own sampling stream.
pub struct LrLearner {
    state: FtrlState,
    rng: StreamRng,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: LrStatus, msg: impl Into<String>) -> LrStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> LrStatus {
    let status = match &e {
        Error::InvalidDims(_) | Error::InvalidArgument(_) | Error::Parse { .. } => LrStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => LrStatus::DimensionMismatch,
        Error::NotPositiveDefinite { .. } => LrStatus::NotPositiveDefinite,
        Error::TooLarge(_) => LrStatus::TooLarge,
        Error::NonFinite(_) => LrStatus::NonFinite,
        Error::Oracle(_) | Error::Io(_) => LrStatus::Internal,
    };
    fail(status, e.to_string())
}

fn guard<F>(f: F) -> LrStatus
where
    F: FnOnce() -> Result<(), LrStatus>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LrStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(LrStatus::Panic, format!("panic: {msg}"))
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, LrStatus>;
}

impl<T> OrStatus<T> for local_regret::Result<T> {
    fn or_status(self) -> Result<T, LrStatus> {
        self.map_err(from_error)
    }
}

fn dims(n: usize, l: usize) -> Result<ProblemDims, LrStatus> {
    ProblemDims::new(n, l).or_status()
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), LrStatus> {
    if p.is_null() {
        Err(fail(LrStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn read_square(data: *const f64, len: usize, side: usize, name: &str) -> Result<DMatrix<f64>, LrStatus> {
    non_null(data, name)?;
    if len != side * side {
        return Err(fail(
            LrStatus::DimensionMismatch,
            format!("{name} has {len} entries, expected {}", side * side),
        ));
    }
    let slice = std::slice::from_raw_parts(data, len);
    Ok(DMatrix::from_row_slice(side, side, slice))
}

unsafe fn write_square(m: &DMatrix<f64>, out: *mut f64, len: usize, name: &str) -> Result<(), LrStatus> {
    non_null(out, name)?;
    let side = m.nrows();
    if len != side * side {
        return Err(fail(
            LrStatus::DimensionMismatch,
            format!("{name} holds {len} entries, expected {}", side * side),
        ));
    }
    let dst = std::slice::from_raw_parts_mut(out, len);
    for r in 0..side {
        for c in 0..side {
            dst[r * side + c] = m[(r, c)];
        }
    }
    Ok(())
}

unsafe fn put<T>(out: *mut T, value: T, name: &str) -> Result<(), LrStatus> {
    non_null(out, name)?;
    out.write(value);
    Ok(())
}

fn boxed_matrix(inner: PseudoMomentMatrix) -> *mut LrMatrix {
    Box::into_raw(Box::new(LrMatrix { inner }))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (truncated and
/// NUL-terminated). Returns the buffer size needed for the full message, or
/// 0 when there is none. `buf` may be null to query the size.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn lr_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            return 0;
        };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = (bytes.len() - 1).min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// The uniform point of the polytope for `n` items and `l` labels.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn lr_matrix_uniform(n: usize, l: usize, out: *mut *mut LrMatrix) -> LrStatus {
    guard(|| {
        let d = dims(n, l)?;
        put(out, boxed_matrix(uniform_matrix(d)), "out")
    })
}

/// Wrap a row-major `side * side` array without checking feasibility.
///
/// # Safety
/// `entries` must be valid for `len` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn lr_matrix_from_entries(
    n: usize,
    l: usize,
    entries: *const f64,
    len: usize,
    out: *mut *mut LrMatrix,
) -> LrStatus {
    guard(|| {
        let d = dims(n, l)?;
        let m = read_square(entries, len, d.side(), "entries")?;
        let inner = PseudoMomentMatrix::new(d, m).or_status()?;
        put(out, boxed_matrix(inner), "out")
    })
}

/// Project a symmetric row-major matrix onto the polytope. `tol <= 0` and
/// `max_iters == 0` select the defaults. `converged` may be null.
///
/// # Safety
/// `raw` must be valid for `len` reads, `out` for one write and `converged`
/// null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn lr_matrix_project(
    n: usize,
    l: usize,
    raw: *const f64,
    len: usize,
    tol: f64,
    max_iters: usize,
    out: *mut *mut LrMatrix,
    converged: *mut bool,
) -> LrStatus {
    guard(|| {
        let d = dims(n, l)?;
        let m = read_square(raw, len, d.side(), "raw")?;
        non_null(out, "out")?;
        let mut opts = ProjectionOptions::default();
        if tol > 0.0 {
            opts.tol = tol;
        }
        if max_iters > 0 {
            opts.max_iters = max_iters;
        }
        let p = project(d, &m, opts).or_status()?;
        if !converged.is_null() {
            converged.write(p.converged);
        }
        put(out, boxed_matrix(p.matrix), "out")
    })
}

/// Side length `n * L` of a matrix, 0 for null.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lr_matrix_side(m: *const LrMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.dims().side())
}

/// Copy entries out in row-major order.
///
/// # Safety
/// `m` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn lr_matrix_entries(m: *const LrMatrix, out: *mut f64, len: usize) -> LrStatus {
    guard(|| {
        non_null(m, "matrix")?;
        write_square((*m).inner.entries(), out, len, "out")
    })
}

/// Feasibility check at tolerance `tol` (`tol <= 0` selects the default).
///
/// # Safety
/// `m` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn lr_matrix_is_feasible(m: *const LrMatrix, tol: f64, out: *mut bool) -> LrStatus {
    guard(|| {
        non_null(m, "matrix")?;
        let tol = if tol > 0.0 {
            FeasibilityTolerance::new(tol).or_status()?
        } else {
            FeasibilityTolerance::default()
        };
        let report = is_feasible(&(*m).inner, tol).or_status()?;
        put(out, report.feasible, "out")
    })
}

/// `log det(I + L M)` and, when `gradient` is not null, its gradient.
///
/// # Safety
/// `m` must be a live handle, `value` valid for one write and `gradient`
/// null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn lr_regularizer_eval(
    m: *const LrMatrix,
    value: *mut f64,
    gradient: *mut f64,
    len: usize,
) -> LrStatus {
    guard(|| {
        non_null(m, "matrix")?;
        non_null(value, "value")?;
        let e = eval(&(*m).inner).or_status()?;
        if !gradient.is_null() {
            write_square(&e.gradient, gradient, len, "gradient")?;
        }
        put(value, e.value, "value")
    })
}

/// Inverse-Hessian quadratic form of an `L x L` row-major payoff placed on
/// block `(i, j)`.
///
/// # Safety
/// `m` must be a live handle, `payoff` valid for `len` reads and `out` for
/// one write.
#[no_mangle]
pub unsafe extern "C" fn lr_inv_hessian_quadform(
    m: *const LrMatrix,
    i: usize,
    j: usize,
    payoff: *const f64,
    len: usize,
    out: *mut f64,
) -> LrStatus {
    guard(|| {
        non_null(m, "matrix")?;
        let m = &(*m).inner;
        let p = read_square(payoff, len, m.dims().n_labels(), "payoff")?;
        let q = inv_hessian_quadform(m, i, j, &p).or_status()?;
        put(out, q.value, "out")
    })
}

/// Release a matrix handle. Null is ignored.
///
/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lr_matrix_free(m: *mut LrMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Default learning rate `sqrt(n L / (4 T))`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn lr_choose_nu(n: usize, l: usize, rounds: usize, out: *mut f64) -> LrStatus {
    guard(|| {
        let d = dims(n, l)?;
        put(out, choose_nu(d, rounds).or_status()?, "out")
    })
}

/// New learner with learning rate `nu` and default inner-solver settings.
/// Predictions draw from a stream derived from `seed`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn lr_learner_new(n: usize, l: usize, nu: f64, seed: u64, out: *mut *mut LrLearner) -> LrStatus {
    guard(|| {
        let d = dims(n, l)?;
        non_null(out, "out")?;
        let state = FtrlState::init(d, nu, InnerSolverConfig::for_labels(l)).or_status()?;
        let learner = LrLearner {
            state,
            rng: stream(seed, "learner", 0),
        };
        put(out, Box::into_raw(Box::new(learner)), "out")
    })
}

/// Sample labels `(a, b)` for the queried pair from the current iterate.
///
/// # Safety
/// `learner` must be a live handle, `a` and `b` valid for one write each.
#[no_mangle]
pub unsafe extern "C" fn lr_learner_predict(
    learner: *mut LrLearner,
    i: usize,
    j: usize,
    a: *mut usize,
    b: *mut usize,
) -> LrStatus {
    guard(|| {
        non_null(learner, "learner")?;
        non_null(a, "a")?;
        non_null(b, "b")?;
        let lr = &mut *learner;
        let (x, y) = lr.state.predict(i, j, &mut lr.rng).or_status()?;
        a.write(x);
        b.write(y);
        Ok(())
    })
}

unsafe fn payoff(
    lr: &LrLearner,
    i: usize,
    j: usize,
    block: *const f64,
    len: usize,
) -> Result<PayoffFunction, LrStatus> {
    let p = read_square(block, len, lr.state.dims().n_labels(), "block")?;
    PayoffFunction::new((i, j), p).or_status()
}

/// Expected payoff of the current iterate for an `L x L` row-major block on
/// pair `(i, j)`.
///
/// # Safety
/// `learner` must be a live handle, `block` valid for `len` reads and `out`
/// for one write.
#[no_mangle]
pub unsafe extern "C" fn lr_learner_expected_payoff(
    learner: *const LrLearner,
    i: usize,
    j: usize,
    block: *const f64,
    len: usize,
    out: *mut f64,
) -> LrStatus {
    guard(|| {
        non_null(learner, "learner")?;
        let lr = &*learner;
        let p = payoff(lr, i, j, block, len)?;
        put(out, lr.state.expected_payoff(&p), "out")
    })
}

/// Add the revealed payoff and re-solve for the next iterate.
///
/// # Safety
/// `learner` must be a live handle and `block` valid for `len` reads.
#[no_mangle]
pub unsafe extern "C" fn lr_learner_update(
    learner: *mut LrLearner,
    i: usize,
    j: usize,
    block: *const f64,
    len: usize,
) -> LrStatus {
    guard(|| {
        non_null(learner, "learner")?;
        let lr = &mut *learner;
        let p = payoff(lr, i, j, block, len)?;
        lr.state.update(&p).or_status()
    })
}

/// Copy of the current iterate as a new matrix handle.
///
/// # Safety
/// `learner` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn lr_learner_copy_current(learner: *const LrLearner, out: *mut *mut LrMatrix) -> LrStatus {
    guard(|| {
        non_null(learner, "learner")?;
        put(out, boxed_matrix((*learner).state.current().clone()), "out")
    })
}

/// Release a learner handle. Null is ignored.
///
/// # Safety
/// `learner` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lr_learner_free(learner: *mut LrLearner) {
    if !learner.is_null() {
        drop(Box::from_raw(learner));
    }
}
