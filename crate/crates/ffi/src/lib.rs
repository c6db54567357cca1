//! C ABI over the simulator.
//!
//! Scenarios and traces are opaque handles owned by the caller and released
//! with the matching `*_free` function. Every fallible call returns an
//! [`FtsStatus`]; on failure [`fts_last_error_message`] describes the cause.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fts_teleop::scalar_ops;
use fts_teleop::scenario::{load_scenario, Scenario};
use fts_teleop::sim::{convergence_time, run, SimTrace};
use fts_teleop::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    InvalidConfig = 5,
    Unstable = 6,
    /// The trace never settles below the tolerance.
    NotReached = 7,
    Panic = 8,
}

/// A validated scenario.
pub struct FtsScenario {
    inner: Scenario,
}

/// A recorded simulation trace.
pub struct FtsTrace {
    inner: SimTrace,
}

/// Scalar signals of one trace sample.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FtsSample {
    pub t: f64,
    /// `‖q_l - q_r‖`, rad.
    pub err_norm: f64,
    /// Closed-loop energy `H`, J.
    pub energy: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> FtsStatus {
    match e {
        Error::Io { .. } => FtsStatus::Io,
        Error::Parse { .. } => FtsStatus::Parse,
        Error::InvalidConfig(_) => FtsStatus::InvalidConfig,
        Error::Unstable { .. } | Error::SingularInertia { .. } => FtsStatus::Unstable,
        _ => FtsStatus::InvalidArgument,
    }
}

/// Runs `f`, records any error or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), FtsStatus>) -> FtsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FtsStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            FtsStatus::Panic
        }
    }
}

fn fail(e: Error) -> FtsStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> FtsStatus {
    set_error(format!("{what} is null"));
    FtsStatus::NullPointer
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, FtsStatus> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path).to_str().map_err(|_| {
        set_error("path is not valid UTF-8");
        FtsStatus::InvalidArgument
    })?;
    Ok(PathBuf::from(s))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, FtsStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), FtsStatus> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message for the last failed call on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fts_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and validates a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fts_scenario_load(path: *const c_char, out: *mut *mut FtsScenario) -> FtsStatus {
    guard(|| {
        let path = path_arg(path)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = load_scenario(&path).map_err(fail)?;
        out.write(Box::into_raw(Box::new(FtsScenario { inner })));
        Ok(())
    })
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
/// `scenario` must come from [`fts_scenario_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fts_scenario_free(scenario: *mut FtsScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Overrides the integration step.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fts_scenario_set_dt(scenario: *mut FtsScenario, dt: f64) -> FtsStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        s.inner = s.inner.with_dt(dt).map_err(fail)?;
        Ok(())
    })
}

/// Joint count of the scenario's robots.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fts_scenario_dof(scenario: *const FtsScenario, out: *mut usize) -> FtsStatus {
    guard(|| {
        let s = deref(scenario, "scenario")?;
        write_out(out, s.inner.system.controller.dof(), "out")
    })
}

/// Settling tolerance configured in the scenario, rad.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fts_scenario_tolerance(scenario: *const FtsScenario, out: *mut f64) -> FtsStatus {
    guard(|| {
        let s = deref(scenario, "scenario")?;
        write_out(out, s.inner.tol, "out")
    })
}

/// Runs the scenario and returns a new trace.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fts_scenario_simulate(scenario: *const FtsScenario, out: *mut *mut FtsTrace) -> FtsStatus {
    guard(|| {
        let s = deref(scenario, "scenario")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = run(&s.inner.system, &s.inner.initial, &s.inner.options).map_err(fail)?;
        out.write(Box::into_raw(Box::new(FtsTrace { inner })));
        Ok(())
    })
}

/// Releases a trace. Null is ignored.
///
/// # Safety
/// `trace` must come from [`fts_scenario_simulate`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fts_trace_free(trace: *mut FtsTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of recorded samples.
///
/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fts_trace_len(trace: *const FtsTrace, out: *mut usize) -> FtsStatus {
    guard(|| {
        let t = deref(trace, "trace")?;
        write_out(out, t.inner.len(), "out")
    })
}

/// Scalar signals of sample `index`.
///
/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fts_trace_get(trace: *const FtsTrace, index: usize, out: *mut FtsSample) -> FtsStatus {
    guard(|| {
        let t = deref(trace, "trace")?;
        let s = t.inner.samples().get(index).ok_or_else(|| {
            set_error(format!("sample {index} out of range (len {})", t.inner.len()));
            FtsStatus::InvalidArgument
        })?;
        write_out(out, FtsSample { t: s.t, err_norm: s.err_norm, energy: s.energy }, "out")
    })
}

/// Copies the joint positions of sample `index` into two arrays of
/// length `len`, which must equal the joint count.
///
/// # Safety
/// `trace` must be a live handle; both arrays must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fts_trace_positions(
    trace: *const FtsTrace,
    index: usize,
    q_local: *mut f64,
    q_remote: *mut f64,
    len: usize,
) -> FtsStatus {
    guard(|| {
        let t = deref(trace, "trace")?;
        if q_local.is_null() || q_remote.is_null() {
            return Err(null("position buffer"));
        }
        if len != t.inner.dof() {
            set_error(format!("buffer length {len} does not match {} joints", t.inner.dof()));
            return Err(FtsStatus::InvalidArgument);
        }
        let s = t.inner.samples().get(index).ok_or_else(|| {
            set_error(format!("sample {index} out of range (len {})", t.inner.len()));
            FtsStatus::InvalidArgument
        })?;
        ptr::copy_nonoverlapping(s.q.local.as_ptr(), q_local, len);
        ptr::copy_nonoverlapping(s.q.remote.as_ptr(), q_remote, len);
        Ok(())
    })
}

/// First time after which the error stays below `tol`. Returns
/// `NotReached` when the trace never settles.
///
/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fts_trace_convergence_time(trace: *const FtsTrace, tol: f64, out: *mut f64) -> FtsStatus {
    guard(|| {
        let t = deref(trace, "trace")?;
        match convergence_time(&t.inner, tol).map_err(fail)? {
            Some(v) => write_out(out, v, "out"),
            None => {
                set_error(format!("error never stays below {tol}"));
                Err(FtsStatus::NotReached)
            }
        }
    })
}

/// Writes the trace as CSV.
///
/// # Safety
/// `trace` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fts_trace_write_csv(trace: *const FtsTrace, path: *const c_char) -> FtsStatus {
    guard(|| {
        let t = deref(trace, "trace")?;
        let path = path_arg(path)?;
        t.inner.write_csv(&path).map_err(fail)
    })
}

/// `⌈x⌋^p`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fts_signed_pow(x: f64, p: f64, out: *mut f64) -> FtsStatus {
    guard(|| write_out(out, scalar_ops::signed_pow(x, p).map_err(fail)?, "out"))
}

/// `(p, δ)`-saturated signed power.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fts_sat_pow(x: f64, p: f64, delta: f64, out: *mut f64) -> FtsStatus {
    guard(|| write_out(out, scalar_ops::sat_pow(x, p, delta).map_err(fail)?, "out"))
}

/// Integral of the saturated signed power from 0 to `x`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fts_s_integral(x: f64, delta: f64, p: f64, out: *mut f64) -> FtsStatus {
    guard(|| write_out(out, scalar_ops::s_integral(x, delta, p).map_err(fail)?, "out"))
}
