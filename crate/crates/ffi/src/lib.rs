//! C ABI over the intersection simulator. Handles are opaque pointers owned
//! by this library; every fallible call returns a [`MixflowStatus`] and
//! leaves a human-readable message retrievable with
//! [`mixflow_last_error_message`]. The companion header is generated into
//! `include/mixflow.h` at build time.

use mixflow::analysis::{self, Coefficients, HeadwayInputs};
use mixflow::config::load_profiles;
use mixflow::engine::{run, Profiles};
use mixflow::measurement::{summarize, RunSummary};
use mixflow::scenario::{default_testbed, FleetShares, Scenario};
use mixflow::sweep::scenario_id_for;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Result of every fallible call in this ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixflowStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A configuration file failed to load or parse.
    Config = 3,
    /// The scenario or an argument failed validation.
    Invalid = 4,
    /// The simulation aborted (safety invariant or internal failure).
    Engine = 5,
    /// The requested quantity has no value for this run (e.g. no estimate).
    NoValue = 6,
    /// An index was out of range.
    OutOfRange = 7,
    /// The caller's buffer is too small for the requested string.
    BufferTooSmall = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl std::fmt::Display) {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn fail(status: MixflowStatus, msg: impl std::fmt::Display) -> MixflowStatus {
    set_error(msg);
    status
}

/// An intersection scenario under construction (opaque).
pub struct MixflowScenario {
    inner: Scenario,
}

/// A finished replication reduced to lane-group and intersection summaries
/// (opaque).
pub struct MixflowRunResult {
    summary: RunSummary,
}

/// Library version as a static NUL-terminated string; never null, never freed.
#[no_mangle]
pub extern "C" fn mixflow_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the thread's last error message into `buf` (NUL-terminated) and
/// return the full length including the NUL. When `buf` is null or `cap` is
/// too small, nothing is copied and the required length is still returned.
///
/// # Safety
/// `buf`, when non-null, must point to at least `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mixflow_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap >= bytes.len() {
            unsafe { std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, bytes.len()) };
        }
        bytes.len()
    })
}

/// New scenario with the built-in four-approach testbed geometry, demands,
/// and signal plan. Free with [`mixflow_scenario_free`].
#[no_mangle]
pub extern "C" fn mixflow_scenario_default() -> *mut MixflowScenario {
    Box::into_raw(Box::new(MixflowScenario {
        inner: default_testbed(),
    }))
}

/// Load a scenario file (TOML; omitted fields keep their testbed defaults)
/// and store the new handle in `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer; on
/// success the caller owns `*out` and must free it with
/// [`mixflow_scenario_free`].
#[no_mangle]
pub unsafe extern "C" fn mixflow_scenario_from_toml(
    path: *const c_char,
    out: *mut *mut MixflowScenario,
) -> MixflowStatus {
    if path.is_null() || out.is_null() {
        return fail(MixflowStatus::NullArgument, "path and out must be non-null");
    }
    let Ok(path) = unsafe { CStr::from_ptr(path) }.to_str() else {
        return fail(MixflowStatus::InvalidUtf8, "path is not valid UTF-8");
    };
    match mixflow::config::load_scenario(Path::new(path)) {
        Ok(inner) => {
            unsafe { *out = Box::into_raw(Box::new(MixflowScenario { inner })) };
            MixflowStatus::Ok
        }
        Err(e) => fail(MixflowStatus::Config, e),
    }
}

/// Replace the scenario's fleet shares; the four values must be nonnegative
/// and sum to 1.
///
/// # Safety
/// `sc` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn mixflow_scenario_set_shares(
    sc: *mut MixflowScenario,
    hv: f64,
    cv: f64,
    av: f64,
    cav: f64,
) -> MixflowStatus {
    let Some(sc) = (unsafe { sc.as_mut() }) else {
        return fail(MixflowStatus::NullArgument, "scenario handle is null");
    };
    let shares = FleetShares { hv, cv, av, cav };
    if let Err(e) = shares.validate() {
        return fail(MixflowStatus::Invalid, e);
    }
    sc.inner = sc.inner.with_shares(&scenario_id_for(shares), shares);
    MixflowStatus::Ok
}

/// Set the warmup and measured durations, in seconds.
///
/// # Safety
/// `sc` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn mixflow_scenario_set_horizon(
    sc: *mut MixflowScenario,
    warmup: f64,
    duration: f64,
) -> MixflowStatus {
    let Some(sc) = (unsafe { sc.as_mut() }) else {
        return fail(MixflowStatus::NullArgument, "scenario handle is null");
    };
    if !(warmup >= 0.0 && duration > 0.0) {
        return fail(
            MixflowStatus::Invalid,
            format!("warmup {warmup} must be >= 0 and duration {duration} > 0"),
        );
    }
    sc.inner.warmup = warmup;
    sc.inner.duration = duration;
    MixflowStatus::Ok
}

/// Release a scenario handle. Null is a no-op.
///
/// # Safety
/// `sc` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn mixflow_scenario_free(sc: *mut MixflowScenario) {
    if !sc.is_null() {
        drop(unsafe { Box::from_raw(sc) });
    }
}

fn run_summarized(
    sc: &Scenario,
    profiles: &Profiles,
    seed: u64,
    out: *mut *mut MixflowRunResult,
) -> MixflowStatus {
    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<RunSummary, String> {
        sc.validate().map_err(|e| e.to_string())?;
        let log = run(sc, profiles, seed, false).map_err(|e| e.to_string())?;
        Ok(summarize(sc, &log))
    }));
    match outcome {
        Ok(Ok(summary)) => {
            unsafe { *out = Box::into_raw(Box::new(MixflowRunResult { summary })) };
            MixflowStatus::Ok
        }
        Ok(Err(e)) => fail(MixflowStatus::Engine, e),
        Err(_) => fail(MixflowStatus::Engine, "internal panic during simulation"),
    }
}

/// Simulate one replication with the built-in driver profiles and store the
/// result handle in `*out`.
///
/// # Safety
/// `sc` must be a live handle and `out` a valid pointer; on success the
/// caller owns `*out` and must free it with [`mixflow_result_free`].
#[no_mangle]
pub unsafe extern "C" fn mixflow_run(
    sc: *const MixflowScenario,
    seed: u64,
    out: *mut *mut MixflowRunResult,
) -> MixflowStatus {
    let (Some(sc), false) = (unsafe { sc.as_ref() }, out.is_null()) else {
        return fail(
            MixflowStatus::NullArgument,
            "scenario and out must be non-null",
        );
    };
    run_summarized(&sc.inner, &Profiles::builtin(), seed, out)
}

/// Like [`mixflow_run`], but first loads per-fleet driver-profile overrides
/// from a TOML file (e.g. calibrated CC0/CC1 values).
///
/// # Safety
/// Pointer requirements of [`mixflow_run`] plus `profiles_path` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mixflow_run_with_profile_file(
    sc: *const MixflowScenario,
    profiles_path: *const c_char,
    seed: u64,
    out: *mut *mut MixflowRunResult,
) -> MixflowStatus {
    let (Some(sc), false, false) = (
        unsafe { sc.as_ref() },
        profiles_path.is_null(),
        out.is_null(),
    ) else {
        return fail(
            MixflowStatus::NullArgument,
            "scenario, profiles_path, and out must be non-null",
        );
    };
    let Ok(path) = unsafe { CStr::from_ptr(profiles_path) }.to_str() else {
        return fail(
            MixflowStatus::InvalidUtf8,
            "profiles path is not valid UTF-8",
        );
    };
    match load_profiles(Path::new(path)) {
        Ok(profiles) => run_summarized(&sc.inner, &profiles, seed, out),
        Err(e) => fail(MixflowStatus::Config, e),
    }
}

/// Number of measured lane groups in a result; 0 when the handle is null.
///
/// # Safety
/// `res` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn mixflow_result_group_count(res: *const MixflowRunResult) -> usize {
    unsafe { res.as_ref() }.map_or(0, |r| r.summary.groups.len())
}

fn with_group<T>(
    res: *const MixflowRunResult,
    index: usize,
    out: *mut T,
    get: impl Fn(&mixflow::measurement::GroupSummary) -> Option<T>,
) -> MixflowStatus {
    let (Some(res), false) = (unsafe { res.as_ref() }, out.is_null()) else {
        return fail(
            MixflowStatus::NullArgument,
            "result and out must be non-null",
        );
    };
    let Some(group) = res.summary.groups.get(index) else {
        return fail(
            MixflowStatus::OutOfRange,
            format!(
                "group index {index} out of range ({})",
                res.summary.groups.len()
            ),
        );
    };
    match get(group) {
        Some(v) => {
            unsafe { *out = v };
            MixflowStatus::Ok
        }
        None => fail(MixflowStatus::NoValue, "no estimate for this lane group"),
    }
}

/// Copy the lane-group identifier (e.g. "eb_excl_through") into `buf`.
///
/// # Safety
/// `res` must be a live handle; `buf` must point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mixflow_result_group_id(
    res: *const MixflowRunResult,
    index: usize,
    buf: *mut c_char,
    cap: usize,
) -> MixflowStatus {
    let (Some(res), false) = (unsafe { res.as_ref() }, buf.is_null()) else {
        return fail(
            MixflowStatus::NullArgument,
            "result and buf must be non-null",
        );
    };
    let Some(group) = res.summary.groups.get(index) else {
        return fail(
            MixflowStatus::OutOfRange,
            format!(
                "group index {index} out of range ({})",
                res.summary.groups.len()
            ),
        );
    };
    let bytes = group.group.id.as_bytes();
    if cap < bytes.len() + 1 {
        return fail(
            MixflowStatus::BufferTooSmall,
            format!("need {} bytes, have {cap}", bytes.len() + 1),
        );
    }
    unsafe {
        std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, bytes.len());
        *buf.add(bytes.len()) = 0;
    }
    MixflowStatus::Ok
}

/// Saturation headway (s) of one lane group; `NoValue` when the run produced
/// no estimate for it.
///
/// # Safety
/// `res` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mixflow_result_group_headway(
    res: *const MixflowRunResult,
    index: usize,
    out: *mut f64,
) -> MixflowStatus {
    with_group(res, index, out, |g| g.h_s)
}

/// Hourly bar-crossing throughput (veh/h) of one lane group.
///
/// # Safety
/// `res` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mixflow_result_group_throughput(
    res: *const MixflowRunResult,
    index: usize,
    out: *mut f64,
) -> MixflowStatus {
    with_group(res, index, out, |g| Some(g.throughput))
}

/// Volume-weighted intersection saturation headway (s).
///
/// # Safety
/// `res` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mixflow_result_intersection_headway(
    res: *const MixflowRunResult,
    out: *mut f64,
) -> MixflowStatus {
    let (Some(res), false) = (unsafe { res.as_ref() }, out.is_null()) else {
        return fail(
            MixflowStatus::NullArgument,
            "result and out must be non-null",
        );
    };
    match res.summary.intersection.h_s {
        Some(h) => {
            unsafe { *out = h };
            MixflowStatus::Ok
        }
        None => fail(
            MixflowStatus::NoValue,
            "run produced no intersection estimate",
        ),
    }
}

/// Total intersection throughput (veh/h).
///
/// # Safety
/// `res` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mixflow_result_intersection_throughput(
    res: *const MixflowRunResult,
    out: *mut f64,
) -> MixflowStatus {
    let (Some(res), false) = (unsafe { res.as_ref() }, out.is_null()) else {
        return fail(
            MixflowStatus::NullArgument,
            "result and out must be non-null",
        );
    };
    unsafe { *out = res.summary.intersection.throughput };
    MixflowStatus::Ok
}

/// Release a result handle. Null is a no-op.
///
/// # Safety
/// `res` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn mixflow_result_free(res: *mut MixflowRunResult) {
    if !res.is_null() {
        drop(unsafe { Box::from_raw(res) });
    }
}

/// Lane capacity (veh/h) from a saturation headway (s) and a green ratio
/// `green / cycle` (s/s).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mixflow_capacity(
    h_s: f64,
    green: f64,
    cycle: f64,
    out: *mut f64,
) -> MixflowStatus {
    if out.is_null() {
        return fail(MixflowStatus::NullArgument, "out must be non-null");
    }
    match analysis::capacity(h_s, green, cycle) {
        Ok(c) => {
            unsafe { *out = c };
            MixflowStatus::Ok
        }
        Err(e) => fail(MixflowStatus::Invalid, e),
    }
}

/// Through-lane capacity adjustment factor for a fleet mix, given fitted
/// model coefficients (base intercept and the three share effects).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mixflow_caf_through(
    intercept: f64,
    beta_cv: f64,
    beta_av: f64,
    beta_cav: f64,
    cv: f64,
    av: f64,
    cav: f64,
    out: *mut f64,
) -> MixflowStatus {
    if out.is_null() {
        return fail(MixflowStatus::NullArgument, "out must be non-null");
    }
    let inputs = HeadwayInputs::through(cv, av, cav);
    if let Err(e) = inputs.validate() {
        return fail(MixflowStatus::Invalid, e);
    }
    let coeffs = Coefficients {
        intercept,
        cv: beta_cv,
        av: beta_av,
        cav: beta_cav,
        d_exl: 0.0,
        d_exr: 0.0,
        d_shtr: None,
        d_shtr_rt: None,
    };
    match analysis::caf(&coeffs, &inputs) {
        Ok(f) => {
            unsafe { *out = f };
            MixflowStatus::Ok
        }
        Err(e) => fail(MixflowStatus::Invalid, e),
    }
}
