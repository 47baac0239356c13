//! C ABI over the xpatch toolkit.
//!
//! Every fallible function returns an [`XpatchStatus`]; on failure the
//! message is available from [`xpatch_last_error`] on the same thread.
//! Models are opaque handles created by [`xpatch_model_load`] and released
//! with [`xpatch_model_free`]. Arrays are caller-owned and passed as a
//! pointer plus an element count.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use xpatch::adf;
use xpatch::autograd::Tensor;
use xpatch::datasets::{Scaler, SeriesView};
use xpatch::report::forecast;
use xpatch::decompose::{ema_closed_form, sma, DecomposedPair};
use xpatch::model::{checkpoint, XPatch};
use xpatch::train::{lr_cosine_warmup, lr_patch_tst, lr_sigmoid, lr_standard, rho_arctan, rho_card};
use xpatch::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XpatchStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Usage, parameter or configuration error.
    InvalidArgument = 2,
    /// Malformed or insufficient input data.
    Data = 3,
    /// Incompatible array lengths or shapes.
    Dimension = 4,
    /// Non-finite or ill-conditioned computation.
    Numerical = 5,
    /// File could not be read or written.
    Io = 6,
    /// Caller-provided output buffer is too small.
    BufferTooSmall = 7,
    /// An internal panic was caught at the boundary.
    Internal = 8,
}

/// Learning-rate schedule selector for [`xpatch_learning_rate`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XpatchSchedule {
    Standard = 0,
    PatchTst = 1,
    CosineWarmup = 2,
    Sigmoid = 3,
}

/// Outcome of [`xpatch_adf`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct XpatchAdfResult {
    pub t_stat: f64,
    pub p_value: f64,
    pub lags_used: usize,
    /// Observations in the regression.
    pub nobs: usize,
    pub critical_1pct: f64,
    pub critical_5pct: f64,
    pub critical_10pct: f64,
    pub stationary_at_5pct: bool,
}

/// Opaque trained model, optionally with the scaler it was trained under.
pub struct XpatchModel {
    model: XPatch,
    scaler: Option<Scaler>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> XpatchStatus {
    match e {
        Error::Usage(_) | Error::Parameter(_) | Error::Config(_) => XpatchStatus::InvalidArgument,
        Error::Data(_) => XpatchStatus::Data,
        Error::Dimension(_) => XpatchStatus::Dimension,
        Error::Numerical(_) => XpatchStatus::Numerical,
        Error::Io { .. } => XpatchStatus::Io,
    }
}

struct Fail(XpatchStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> XpatchStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => XpatchStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            XpatchStatus::Internal
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(XpatchStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn input<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Fail> {
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or point to `len` writable values.
unsafe fn output<'a>(p: *mut f64, len: usize, name: &str) -> Result<&'a mut [f64], Fail> {
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn need(have: usize, want: usize, name: &str) -> Result<(), Fail> {
    if have < want {
        return Err(Fail(
            XpatchStatus::BufferTooSmall,
            format!("{name} holds {have} values, {want} required"),
        ));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn xpatch_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn xpatch_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn write_pair(d: DecomposedPair, trend: &mut [f64], seasonal: &mut [f64]) {
    trend.copy_from_slice(&d.trend);
    seasonal.copy_from_slice(&d.seasonal);
}

/// EMA decomposition of `x[0..n]` into `trend` and `seasonal` (each `n` long).
///
/// # Safety
/// `x` must hold `n` values; `trend` and `seasonal` must each have room for `n`.
#[no_mangle]
pub unsafe extern "C" fn xpatch_ema_decompose(
    x: *const f64,
    n: usize,
    alpha: f64,
    trend: *mut f64,
    seasonal: *mut f64,
) -> XpatchStatus {
    guard(|| {
        let x = input(x, n, "x")?;
        let d = ema_closed_form(x, alpha)?;
        write_pair(d, output(trend, n, "trend")?, output(seasonal, n, "seasonal")?);
        Ok(())
    })
}

/// Centered moving-average decomposition with an odd `kernel`.
///
/// # Safety
/// Same contract as [`xpatch_ema_decompose`].
#[no_mangle]
pub unsafe extern "C" fn xpatch_sma_decompose(
    x: *const f64,
    n: usize,
    kernel: usize,
    trend: *mut f64,
    seasonal: *mut f64,
) -> XpatchStatus {
    guard(|| {
        let x = input(x, n, "x")?;
        let d = sma(x, kernel)?;
        write_pair(d, output(trend, n, "trend")?, output(seasonal, n, "seasonal")?);
        Ok(())
    })
}

/// Arctangent loss coefficient for horizon step `i` (from 1) with scale `m`.
#[no_mangle]
pub extern "C" fn xpatch_rho_arctan(i: usize, m: f64) -> f64 {
    rho_arctan(i, m)
}

/// `i^(-1/2)` loss coefficient.
#[no_mangle]
pub extern "C" fn xpatch_rho_card(i: usize) -> f64 {
    rho_card(i)
}

/// Learning rate at `epoch`. `w` is the warm-up coefficient (epochs for the
/// cosine schedule); `k` and `s` only affect the sigmoid schedule.
#[no_mangle]
pub extern "C" fn xpatch_learning_rate(
    schedule: XpatchSchedule,
    epoch: usize,
    alpha0: f64,
    k: f64,
    s: f64,
    w: f64,
    total_epochs: usize,
) -> f64 {
    match schedule {
        XpatchSchedule::Standard => lr_standard(epoch, alpha0),
        XpatchSchedule::PatchTst => lr_patch_tst(epoch, alpha0),
        XpatchSchedule::CosineWarmup => lr_cosine_warmup(epoch, alpha0, w as usize, total_epochs),
        XpatchSchedule::Sigmoid => lr_sigmoid(epoch, alpha0, k, s, w),
    }
}

/// Augmented Dickey-Fuller test with a constant. A negative `max_lags`
/// selects the Schwert rule.
///
/// # Safety
/// `x` must hold `n` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xpatch_adf(x: *const f64, n: usize, max_lags: i64, out: *mut XpatchAdfResult) -> XpatchStatus {
    guard(|| {
        let x = input(x, n, "x")?;
        non_null(out, "out")?;
        let lags = usize::try_from(max_lags).ok();
        let r = adf::adf_test(x, lags)?;
        *out = XpatchAdfResult {
            t_stat: r.t_stat,
            p_value: r.p_value,
            lags_used: r.lags_used,
            nobs: r.n,
            critical_1pct: r.critical.one,
            critical_5pct: r.critical.five,
            critical_10pct: r.critical.ten,
            stationary_at_5pct: r.stationary_at_5pct,
        };
        Ok(())
    })
}

/// Loads the checkpoint `<stem>.json` / `<stem>.bin` into a new handle.
///
/// # Safety
/// `stem` must be a NUL-terminated UTF-8 path and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn xpatch_model_load(stem: *const c_char, out: *mut *mut XpatchModel) -> XpatchStatus {
    guard(|| {
        non_null(stem, "stem")?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let stem = CStr::from_ptr(stem)
            .to_str()
            .map_err(|_| Fail(XpatchStatus::InvalidArgument, "checkpoint path is not UTF-8".into()))?;
        let ck = checkpoint::load(Path::new(stem))?;
        *out = Box::into_raw(Box::new(XpatchModel {
            model: ck.model,
            scaler: ck.scaler,
        }));
        Ok(())
    })
}

/// Releases a handle from [`xpatch_model_load`]; null is ignored.
///
/// # Safety
/// `model` must be null or a live handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn xpatch_model_free(model: *mut XpatchModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes lookback, horizon and variable count; any pointer may be null.
///
/// # Safety
/// `model` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn xpatch_model_dims(
    model: *const XpatchModel,
    lookback: *mut usize,
    horizon: *mut usize,
    channels: *mut usize,
) -> XpatchStatus {
    guard(|| {
        non_null(model, "model")?;
        let c = &(*model).model.config;
        for (p, v) in [(lookback, c.lookback), (horizon, c.horizon), (channels, c.channels)] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Forecasts `rows` univariate rows: `input` is `rows x lookback`, `output`
/// receives `rows x horizon`, both row-major and in standardized units.
/// `rows` must be a multiple of the variable count.
///
/// # Safety
/// `input` must hold `input_len` values and `output` have room for `output_len`.
#[no_mangle]
pub unsafe extern "C" fn xpatch_model_predict(
    model: *const XpatchModel,
    input_rows: *const f64,
    rows: usize,
    input_len: usize,
    output_rows: *mut f64,
    output_len: usize,
) -> XpatchStatus {
    guard(|| {
        non_null(model, "model")?;
        let m = &(*model).model;
        let (l, t) = (m.config.lookback, m.config.horizon);
        need(input_len, rows * l, "input")?;
        need(output_len, rows * t, "output")?;
        let x = input(input_rows, rows * l, "input")?;
        let pred = m.predict(&Tensor::new(vec![rows, l], x.to_vec())?)?;
        output(output_rows, rows * t, "output")?.copy_from_slice(pred.data());
        Ok(())
    })
}

/// Forecasts from raw observations. `values` is time-major `n_rows x channels`
/// in original units; its last `lookback` rows form the window. `output`
/// receives `horizon x channels` values in original units. Requires a
/// checkpoint saved with its scaler.
///
/// # Safety
/// `values` must hold `n_rows * channels` values and `output` have room for `output_len`.
#[no_mangle]
pub unsafe extern "C" fn xpatch_model_forecast(
    model: *const XpatchModel,
    values: *const f64,
    n_rows: usize,
    output_rows: *mut f64,
    output_len: usize,
) -> XpatchStatus {
    guard(|| {
        non_null(model, "model")?;
        let h = &*model;
        let scaler = h
            .scaler
            .as_ref()
            .ok_or_else(|| Fail(XpatchStatus::InvalidArgument, "checkpoint carries no scaler".into()))?;
        let c = &h.model.config;
        let m = c.channels;
        need(output_len, c.horizon * m, "output")?;
        let raw = SeriesView {
            values: input(values, n_rows * m, "values")?.to_vec(),
            n_cols: m,
            first_row: 0,
        };
        let f = forecast(&h.model, scaler, &raw, c.lookback)?;
        output(output_rows, f.values.len(), "output")?.copy_from_slice(&f.values);
        Ok(())
    })
}
