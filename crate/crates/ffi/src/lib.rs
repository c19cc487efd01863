//! C ABI over `aru-core`.
//!
//! Two opaque handles are exposed. `AruState` is a standalone streaming
//! unit: create it, feed `(h, y)` pairs, read local predictions and
//! parameters, and checkpoint it as bytes. `AruModel` is a trained
//! forecaster loaded from a checkpoint file; it forecasts one window at a
//! time, optionally from an `AruState` carried by the caller.
//!
//! Every fallible function returns an `AruStatus` code. On failure the
//! message is kept per thread and can be read with `aru_last_error`.
//! Handles returned through out-pointers must be released with the
//! matching `*_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use aru_core::aru::{AruConfig, AruState as CoreState};
use aru_core::checkpoint::Checkpoint;
use aru_core::model::{forward_window, Mode, Model, WindowSample};
use aru_core::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AruStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Numerical = 4,
    Io = 5,
    Format = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque streaming ARU state.
pub struct AruState {
    inner: CoreState,
}

/// Opaque trained forecaster.
pub struct AruModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> AruStatus {
    match e {
        Error::ShapeMismatch { .. } => AruStatus::ShapeMismatch,
        Error::NotPositiveDefinite { .. } | Error::NonFinite(_) | Error::Diverged { .. } | Error::ZeroTruth => {
            AruStatus::Numerical
        }
        Error::Io { .. } => AruStatus::Io,
        Error::Checkpoint(_) | Error::Json(_) | Error::Parse { .. } => AruStatus::Format,
        _ => AruStatus::InvalidArgument,
    }
}

struct Fail(AruStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(AruStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AruStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AruStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            AruStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or valid for `len` writes.
unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

/// # Safety
/// `p` must be null or point to a live handle created by this library.
unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `p` must be null or point to a live handle created by this library.
unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn need(got: usize, want: usize, what: &str) -> Result<(), Fail> {
    if got < want {
        return Err(Fail(
            AruStatus::BufferTooSmall,
            format!("{what} holds {got} values, {want} needed"),
        ));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn aru_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static, NUL-terminated name of a status code; "unknown status" for
/// values outside `AruStatus`.
#[no_mangle]
pub extern "C" fn aru_status_name(status: i32) -> *const c_char {
    let s: &'static CStr = match status {
        0 => c"ok",
        1 => c"null pointer",
        2 => c"invalid argument",
        3 => c"shape mismatch",
        4 => c"numerical failure",
        5 => c"io error",
        6 => c"bad format",
        7 => c"buffer too small",
        8 => c"internal panic",
        _ => c"unknown status",
    };
    s.as_ptr()
}

/// Create a zero state for feature width `feature_dim`, one statistics bank
/// per aging factor in `aging[0..banks]`, and ridge `ridge`.
///
/// # Safety
/// `aging` must be valid for `banks` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn aru_state_new(
    feature_dim: usize,
    aging: *const f64,
    banks: usize,
    ridge: f64,
    out: *mut *mut AruState,
) -> AruStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let aging = input(aging, banks, "aging")?.to_vec();
        let inner = CoreState::new(AruConfig::new(feature_dim, aging, ridge)?)?;
        *out = Box::into_raw(Box::new(AruState { inner }));
        Ok(())
    })
}

/// Release a state. Null is ignored.
///
/// # Safety
/// `state` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aru_state_free(state: *mut AruState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Deep copy of a state.
///
/// # Safety
/// `state` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn aru_state_clone(state: *const AruState, out: *mut *mut AruState) -> AruStatus {
    guard(|| {
        let s = handle(state, "state")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(AruState { inner: s.inner.clone() }));
        Ok(())
    })
}

/// Feature width `H` of a state (0 for null).
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aru_state_feature_dim(state: *const AruState) -> usize {
    state.as_ref().map_or(0, |s| s.inner.config().feature_dim)
}

/// Number of statistics banks `J` of a state (0 for null).
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aru_state_banks(state: *const AruState) -> usize {
    state.as_ref().map_or(0, |s| s.inner.config().banks())
}

/// Number of updates applied so far (0 for null).
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aru_state_steps(state: *const AruState) -> u64 {
    state.as_ref().map_or(0, |s| s.inner.step_count())
}

/// Absorb one observation `y` with features `h[0..h_len]`.
///
/// # Safety
/// `state` must be a live handle and `h` valid for `h_len` reads.
#[no_mangle]
pub unsafe extern "C" fn aru_state_update(state: *mut AruState, h: *const f64, h_len: usize, y: f64) -> AruStatus {
    guard(|| {
        let s = handle_mut(state, "state")?;
        let h = input(h, h_len, "h")?;
        s.inner.update(h, y)?;
        Ok(())
    })
}

/// Local prediction at features `h`: per-bank means into `m` and variances
/// into `a`, each of capacity `cap >= banks`.
///
/// # Safety
/// `state` must be a live handle, `h` valid for `h_len` reads, `m` and `a`
/// valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn aru_state_predict(
    state: *const AruState,
    h: *const f64,
    h_len: usize,
    m: *mut f64,
    a: *mut f64,
    cap: usize,
) -> AruStatus {
    guard(|| {
        let s = handle(state, "state")?;
        let h = input(h, h_len, "h")?;
        let banks = s.inner.config().banks();
        need(cap, banks, "output")?;
        let m = output(m, banks, "m")?;
        let a = output(a, banks, "a")?;
        let p = s.inner.predict(h)?;
        m.copy_from_slice(p.m.as_slice());
        a.copy_from_slice(p.a.as_slice());
        Ok(())
    })
}

/// Local parameters of bank `bank`: the mean coefficients `[w, bias]` into
/// `theta_mu` (capacity `cap >= feature_dim + 1`) and the variance into
/// `theta_sigma`.
///
/// # Safety
/// `state` must be a live handle, `theta_mu` valid for `cap` writes and
/// `theta_sigma` for one write.
#[no_mangle]
pub unsafe extern "C" fn aru_state_local_params(
    state: *const AruState,
    bank: usize,
    theta_mu: *mut f64,
    cap: usize,
    theta_sigma: *mut f64,
) -> AruStatus {
    guard(|| {
        let s = handle(state, "state")?;
        if bank >= s.inner.config().banks() {
            return Err(Fail(AruStatus::InvalidArgument, format!("bank {bank} out of range")));
        }
        let d = s.inner.config().aug_dim();
        need(cap, d, "theta_mu")?;
        let out = output(theta_mu, d, "theta_mu")?;
        if theta_sigma.is_null() {
            return Err(null("theta_sigma"));
        }
        let lp = s.inner.local_params()?;
        out.copy_from_slice(lp.theta_mu[bank].as_slice());
        *theta_sigma = lp.theta_sigma[bank];
        Ok(())
    })
}

/// Serialize a state. Call with `buf` null to learn the size through
/// `written`; otherwise `cap` must be at least that size.
///
/// # Safety
/// `state` must be a live handle, `buf` null or valid for `cap` writes, and
/// `written` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn aru_state_to_bytes(
    state: *const AruState,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> AruStatus {
    guard(|| {
        let s = handle(state, "state")?;
        if written.is_null() {
            return Err(null("written"));
        }
        let bytes = s.inner.to_bytes();
        *written = bytes.len();
        if buf.is_null() {
            return Ok(());
        }
        need(cap, bytes.len(), "buffer")?;
        output(buf, bytes.len(), "buf")?.copy_from_slice(&bytes);
        Ok(())
    })
}

/// Restore a state from bytes written by `aru_state_to_bytes`.
///
/// # Safety
/// `buf` must be valid for `len` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn aru_state_from_bytes(buf: *const u8, len: usize, out: *mut *mut AruState) -> AruStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let bytes = input(buf, len, "buf")?;
        let inner = CoreState::from_bytes(bytes)?;
        *out = Box::into_raw(Box::new(AruState { inner }));
        Ok(())
    })
}

/// Load a model checkpoint written by `aru train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn aru_model_load(path: *const c_char, out: *mut *mut AruModel) -> AruStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(AruStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let inner = Checkpoint::load(path)?.model;
        *out = Box::into_raw(Box::new(AruModel { inner }));
        Ok(())
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aru_model_free(model: *mut AruModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Window shape and head of a model.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AruModelInfo {
    pub encoder_len: usize,
    pub horizon: usize,
    /// Categorical inputs per step.
    pub n_cat: usize,
    /// Continuous inputs per step.
    pub n_cont: usize,
    /// 0 baseline, 1 aru, 2 aru-direct.
    pub head: u32,
    /// Width `H` a compatible `AruState` needs (0 for the baseline head).
    pub feature_dim: usize,
    /// Banks a compatible `AruState` needs (0 for the baseline head).
    pub banks: usize,
}

/// # Safety
/// `model` must be a live handle and `info` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn aru_model_info(model: *const AruModel, info: *mut AruModelInfo) -> AruStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let info = handle_mut(info, "info")?;
        let c = &m.inner.config;
        *info = AruModelInfo {
            encoder_len: c.encoder_len,
            horizon: c.horizon,
            n_cat: c.schema.categorical.len(),
            n_cont: c.schema.continuous.len(),
            head: c.head.code(),
            feature_dim: c.aru.as_ref().map_or(0, |a| a.feature_dim),
            banks: c.banks(),
        };
        Ok(())
    })
}

/// Fresh zero state matching an ARU-head model.
///
/// # Safety
/// `model` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn aru_model_new_state(model: *const AruModel, out: *mut *mut AruState) -> AruStatus {
    guard(|| {
        let m = handle(model, "model")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = m.inner.config.aru.clone().ok_or_else(|| {
            Fail(AruStatus::InvalidArgument, "baseline models have no ARU state".into())
        })?;
        *out = Box::into_raw(Box::new(AruState {
            inner: CoreState::new(cfg)?,
        }));
        Ok(())
    })
}

/// Forecast one window in scaled units.
///
/// Inputs cover all `encoder_len + horizon` steps row-major: `cat` holds
/// `n_cat` category indices per step and `cont` `n_cont` scaled continuous
/// values per step. `y_encoder` holds the `encoder_len` scaled targets.
/// `state` is the series state at the window origin, or null to start from
/// zero; it is only read. Means and standard deviations go to `mu` and
/// `sigma`, each of capacity `cap >= horizon`.
///
/// # Safety
/// `model` must be a live handle, `state` null or a live handle, each input
/// valid for its length, and `mu`, `sigma` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn aru_model_forecast(
    model: *const AruModel,
    state: *const AruState,
    cat: *const u32,
    cat_len: usize,
    cont: *const f64,
    cont_len: usize,
    y_encoder: *const f64,
    y_len: usize,
    mu: *mut f64,
    sigma: *mut f64,
    cap: usize,
) -> AruStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let c = &m.inner.config;
        let (e, k) = (c.encoder_len, c.horizon);
        let (n_cat, n_cont) = (c.schema.categorical.len(), c.schema.continuous.len());
        for (got, want, what) in [
            (cat_len, (e + k) * n_cat, "cat"),
            (cont_len, (e + k) * n_cont, "cont"),
            (y_len, e, "y_encoder"),
        ] {
            if got != want {
                return Err(Fail(
                    AruStatus::ShapeMismatch,
                    format!("{what} has {got} values, model expects {want}"),
                ));
            }
        }
        need(cap, k, "output")?;
        let window = WindowSample {
            series: 0,
            start: 0,
            encoder_len: e,
            horizon: k,
            n_cat,
            n_cont,
            cat: input(cat, cat_len, "cat")?.to_vec(),
            cont: input(cont, cont_len, "cont")?.to_vec(),
            y_encoder: input(y_encoder, y_len, "y_encoder")?.to_vec(),
            y_decoder: None,
            scale: 1.0,
        };
        let state = state.as_ref().map(|s| &s.inner);
        let (f, _) = forward_window(&m.inner, &window, state, Mode::Infer)?;
        output(mu, k, "mu")?.copy_from_slice(&f.mu);
        output(sigma, k, "sigma")?.copy_from_slice(&f.sigma);
        Ok(())
    })
}
