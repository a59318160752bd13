//! C interface to the OD request predictor.
//!
//! Every function returns an [`OdpStatus`] (or a plain value for pure
//! helpers). On failure the message is kept per thread and can be read with
//! [`odp_last_error_message`]. Handles are opaque and must be released with
//! their matching `*_free` function. Panics never cross the boundary; they
//! surface as `ODP_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use odp_core::autodiff::Mat;
use odp_core::config::RunConfig;
use odp_core::dataset::Dataset;
use odp_core::model::Model;
use odp_core::preprocess::{haversine_km, Workspace};
use odp_core::training::metrics;
use odp_core::transfer::{ha_baseline, HaMode};
use odp_core::OdpError;

/// Result codes. The first four match the exit codes of the `odp` binary.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdpStatus {
    Ok = 0,
    Config = 1,
    Input = 2,
    Incompatible = 3,
    Compute = 4,
    NullPointer = 5,
    InvalidArgument = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdpHaMode {
    /// Tendency, periodicity and both periodic neighbors, with repeats.
    Plus = 0,
    Tendency = 1,
    Periodicity = 2,
}

impl From<OdpHaMode> for HaMode {
    fn from(m: OdpHaMode) -> Self {
        match m {
            OdpHaMode::Plus => HaMode::Plus,
            OdpHaMode::Tendency => HaMode::Tendency,
            OdpHaMode::Periodicity => HaMode::Periodicity,
        }
    }
}

/// Error metrics over entries whose truth is at least the threshold.
/// When no entry qualifies `defined` is false and the values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdpMetrics {
    pub rmse: f64,
    pub mape: f64,
    pub mae: f64,
    pub count: usize,
    pub defined: bool,
}

/// A loaded preprocessing workspace.
pub struct OdpWorkspace {
    inner: Workspace,
}

/// A model with its checkpoint and the workspace it predicts for.
pub struct OdpPredictor {
    data: Dataset,
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(OdpStatus, String);

impl From<OdpError> for Failure {
    fn from(e: OdpError) -> Self {
        let status = match e.exit_code() {
            1 => OdpStatus::Config,
            2 => OdpStatus::Input,
            3 => OdpStatus::Incompatible,
            _ => OdpStatus::Compute,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(OdpStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(OdpStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OdpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OdpStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            OdpStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))?;
    Ok(Path::new(s))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn odp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn odp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Great-circle distance in kilometers.
#[no_mangle]
pub extern "C" fn odp_haversine_km(lat1: f64, lng1: f64, lat2: f64, lng2: f64) -> f64 {
    haversine_km(lat1, lng1, lat2, lng2)
}

/// RMSE, MAPE and MAE of `pred` against `truth` (both `len` values).
///
/// # Safety
/// `pred` and `truth` must point to `len` readable doubles and `out` to a
/// writable `OdpMetrics`.
#[no_mangle]
pub unsafe extern "C" fn odp_metrics(
    pred: *const f64,
    truth: *const f64,
    len: usize,
    threshold: f64,
    out: *mut OdpMetrics,
) -> OdpStatus {
    guard(|| {
        let pred = slice_arg(pred, len, "pred")?;
        let truth = slice_arg(truth, len, "truth")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let p = Mat::from_shape_vec((1, len), pred.to_vec()).map_err(|e| invalid(e.to_string()))?;
        let t = Mat::from_shape_vec((1, len), truth.to_vec()).map_err(|e| invalid(e.to_string()))?;
        *out = match metrics(&p, &t, threshold) {
            Some(m) => OdpMetrics {
                rmse: m.rmse,
                mape: m.mape,
                mae: m.mae,
                count: m.count,
                defined: true,
            },
            None => OdpMetrics {
                rmse: f64::NAN,
                mape: f64::NAN,
                mae: f64::NAN,
                count: 0,
                defined: false,
            },
        };
        Ok(())
    })
}

/// Historical-average reference for slot `target`.
///
/// `history` holds `slots` rows of `width` values, row-major, where row
/// `s - 1` is slot `s`. `l` is slots per day and `p` the history depth.
/// Writes `width` values to `out`.
///
/// # Safety
/// `history` must point to `slots * width` readable doubles and `out` to
/// `width` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn odp_ha_baseline(
    history: *const f64,
    slots: usize,
    width: usize,
    target: usize,
    l: usize,
    p: usize,
    mode: OdpHaMode,
    out: *mut f64,
) -> OdpStatus {
    guard(|| {
        let len = slots.checked_mul(width).ok_or_else(|| invalid("history size overflows"))?;
        let hist = slice_arg(history, len, "history")?;
        let out = slice_out(out, width, "out")?;
        let rows: Vec<Mat> = hist
            .chunks(width.max(1))
            .take(slots)
            .map(|r| Mat::from_shape_vec((1, width), r.to_vec()).expect("row length"))
            .collect();
        let rows = if width == 0 { vec![Mat::zeros((1, 0)); slots] } else { rows };
        let last = target.checked_sub(1).ok_or_else(|| invalid("target slots are 1-based"))?;
        let b = ha_baseline(&rows, last, l, p, mode.into())?;
        out.copy_from_slice(b.as_slice().ok_or_else(|| invalid("non-contiguous result"))?);
        Ok(())
    })
}

/// Loads a workspace directory written by `odp prep`.
///
/// # Safety
/// `dir` must be a NUL-terminated path and `out` a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn odp_workspace_open(dir: *const c_char, out: *mut *mut OdpWorkspace) -> OdpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let dir = path_arg(dir, "dir")?;
        let ws = Workspace::load(dir)?;
        *out = Box::into_raw(Box::new(OdpWorkspace { inner: ws }));
        Ok(())
    })
}

/// Number of grids, or 0 for a null handle.
///
/// # Safety
/// `ws` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn odp_workspace_grids(ws: *const OdpWorkspace) -> usize {
    ws.as_ref().map_or(0, |w| w.inner.n())
}

/// Number of slots, or 0 for a null handle.
///
/// # Safety
/// `ws` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn odp_workspace_slots(ws: *const OdpWorkspace) -> usize {
    ws.as_ref().map_or(0, |w| w.inner.slots())
}

/// Observed OD counts of a 1-based slot as a row-major `n × n` matrix.
///
/// # Safety
/// `ws` must be a live handle and `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn odp_workspace_od(ws: *const OdpWorkspace, slot: usize, out: *mut f64, len: usize) -> OdpStatus {
    guard(|| {
        let ws = ws.as_ref().ok_or_else(|| null("ws"))?;
        let n = ws.inner.n();
        if slot == 0 || slot > ws.inner.slots() {
            return Err(invalid(format!("slot {slot} outside 1..={}", ws.inner.slots())));
        }
        if len != n * n {
            return Err(invalid(format!("expected {} values, got {len}", n * n)));
        }
        let out = slice_out(out, len, "out")?;
        out.fill(0.0);
        for (i, j, c) in ws.inner.graph(slot).iter() {
            out[i * n + j] = c as f64;
        }
        Ok(())
    })
}

/// Releases a workspace handle. Null is ignored.
///
/// # Safety
/// `ws` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn odp_workspace_free(ws: *mut OdpWorkspace) {
    if !ws.is_null() {
        drop(Box::from_raw(ws));
    }
}

/// Opens a predictor from a configuration file (the same format `odp`
/// reads). The workspace and checkpoint paths come from that file.
///
/// # Safety
/// `config` must be a NUL-terminated path and `out` a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn odp_predictor_open(config: *const c_char, out: *mut *mut OdpPredictor) -> OdpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(config, "config")?;
        let cfg = RunConfig::load(Some(path), std::iter::empty(), &[])?;
        let (data, model) = odp_core::cli::load_trained(&cfg)?;
        *out = Box::into_raw(Box::new(OdpPredictor { data, model }));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn odp_predictor_grids(p: *const OdpPredictor) -> usize {
    p.as_ref().map_or(0, |p| p.data.n)
}

/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn odp_predictor_slots(p: *const OdpPredictor) -> usize {
    p.as_ref().map_or(0, |p| p.data.slots())
}

/// Predicts slot `target` (0 means the slot after the last observed one).
/// Values are clamped at zero. `demand` receives `n` values and `od` the
/// row-major `n × n` matrix; either may be null when its length is 0.
///
/// # Safety
/// `p` must be a live handle and the buffers must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn odp_predictor_predict(
    p: *const OdpPredictor,
    target: usize,
    demand: *mut f64,
    demand_len: usize,
    od: *mut f64,
    od_len: usize,
) -> OdpStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("predictor"))?;
        let n = p.data.n;
        if (demand_len != 0 && demand_len != n) || (od_len != 0 && od_len != n * n) {
            return Err(invalid(format!("buffers must hold {n} and {} values", n * n)));
        }
        let demand = slice_out(demand, demand_len, "demand")?;
        let od = slice_out(od, od_len, "od")?;
        let target = if target == 0 { p.data.slots() + 1 } else { target };
        let (d, g) = p.model.predict(&p.data, target)?;
        for (dst, v) in demand.iter_mut().zip(d.iter()) {
            *dst = v.max(0.0);
        }
        for (dst, v) in od.iter_mut().zip(g.iter()) {
            *dst = v.max(0.0);
        }
        Ok(())
    })
}

/// Releases a predictor handle. Null is ignored.
///
/// # Safety
/// `p` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn odp_predictor_free(p: *mut OdpPredictor) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}
