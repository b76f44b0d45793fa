//! C ABI over `mec_offload`.
//!
//! Handles are opaque and owned by the caller: every `*_from_*` or `mec_solve`
//! result must be released with the matching `*_free`. Functions return a
//! [`MecStatus`]; on failure [`mec_last_error_message`] describes the last
//! error raised on the calling thread. Strategy profiles cross the boundary
//! as row-major `devices x servers` arrays of offload rates.

use mec_offload::best_response::best_response;
use mec_offload::experiment::ExperimentFile;
use mec_offload::game::{iterate, GameOptions, GameTrace};
use mec_offload::{analytic, Error, Scenario, StrategyProfile};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    /// A device index, server index or buffer length is out of range.
    OutOfRange = 4,
    /// The profile or subproblem admits no feasible strategy.
    Infeasible = 5,
    /// A server would be at or above full utilization.
    Unstable = 6,
    NoConvergence = 7,
    Panic = 8,
    Internal = 9,
}

/// A validated scenario together with the game settings from its file.
pub struct MecScenario {
    scenario: Scenario,
    options: GameOptions,
    initial: StrategyProfile,
}

/// Result of iterated best response.
pub struct MecEquilibrium {
    trace: GameTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(MecStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) | Error::ResolutionTooCoarse { .. } | Error::Io { .. } => MecStatus::InvalidConfig,
            Error::RowSumExceedsLambda { .. } | Error::Infeasible { .. } | Error::InfeasibleInitial { .. } => {
                MecStatus::Infeasible
            }
            Error::UnstableSystem { .. } | Error::SingularPoint { .. } => MecStatus::Unstable,
            Error::NoConvergence { .. } => MecStatus::NoConvergence,
            Error::ZeroPolynomial | Error::Unsupported(_) => MecStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: MecStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, turning errors and panics into a status and the thread's last
/// error message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MecStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            MecStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().map_or_else(|| fail(MecStatus::NullPointer, format!("{what} is null")), Ok)
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().map_or_else(|| fail(MecStatus::NullPointer, format!("{what} is null")), Ok)
}

/// Reads a row-major profile of the scenario's shape.
unsafe fn read_profile(sc: &Scenario, rates: *const f64, len: usize) -> Result<StrategyProfile, Failure> {
    let (m, n) = (sc.num_devices(), sc.num_servers());
    if rates.is_null() {
        return fail(MecStatus::NullPointer, "rates is null");
    }
    if len != m * n {
        return fail(MecStatus::OutOfRange, format!("rates has {len} entries, expected {m} x {n}"));
    }
    let flat = std::slice::from_raw_parts(rates, len);
    let rows: Vec<Vec<f64>> = flat.chunks(n).map(<[f64]>::to_vec).collect();
    Ok(StrategyProfile::from_rows(&rows)?)
}

fn check_index(index: usize, bound: usize, what: &str) -> Result<(), Failure> {
    if index >= bound {
        return fail(MecStatus::OutOfRange, format!("{what} {index} out of range (0..{bound})"));
    }
    Ok(())
}

/// Parses an experiment file and builds its scenario, solving transmit powers.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mec_scenario_from_toml(toml: *const c_char, out: *mut *mut MecScenario) -> MecStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        if toml.is_null() {
            return fail(MecStatus::NullPointer, "toml is null");
        }
        let text = CStr::from_ptr(toml).to_str().map_err(|e| Failure(MecStatus::InvalidUtf8, e.to_string()))?;
        let file = ExperimentFile::from_toml(text)?;
        let scenario = Scenario::new(file.scenario_config()?)?;
        let handle = MecScenario { scenario, options: file.game_options(), initial: file.initial_profile()? };
        *out = Box::into_raw(Box::new(handle));
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from [`mec_scenario_from_toml`] and not be freed yet;
/// null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mec_scenario_free(scenario: *mut MecScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of devices; 0 for a null handle.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mec_scenario_num_devices(scenario: *const MecScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.scenario.num_devices())
}

/// Number of servers; 0 for a null handle.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mec_scenario_num_servers(scenario: *const MecScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.scenario.num_servers())
}

/// Runs iterated best response from the file's initial profile with its game
/// settings. A run that stops at the iteration cap still returns `MEC_OK`;
/// check [`mec_equilibrium_converged`].
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mec_solve(scenario: *const MecScenario, out: *mut *mut MecEquilibrium) -> MecStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let s = deref(scenario, "scenario")?;
        let trace = iterate(&s.scenario, &s.initial, &s.options)?;
        *out = Box::into_raw(Box::new(MecEquilibrium { trace }));
        Ok(())
    })
}

/// # Safety
/// `eq` must come from [`mec_solve`] and not be freed yet; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mec_equilibrium_free(eq: *mut MecEquilibrium) {
    if !eq.is_null() {
        drop(Box::from_raw(eq));
    }
}

/// # Safety
/// `eq` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mec_equilibrium_converged(eq: *const MecEquilibrium) -> bool {
    eq.as_ref().is_some_and(|e| e.trace.converged)
}

/// Best-response sweeps performed.
///
/// # Safety
/// `eq` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mec_equilibrium_sweeps(eq: *const MecEquilibrium) -> usize {
    eq.as_ref().map_or(0, |e| e.trace.sweeps())
}

/// Largest response-time gain any device could still get by deviating; NaN
/// for a null handle.
///
/// # Safety
/// `eq` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mec_equilibrium_residual(eq: *const MecEquilibrium) -> f64 {
    eq.as_ref().map_or(f64::NAN, |e| e.trace.ne_residual)
}

/// Copies the final profile, row-major, into `rates` of length `len`.
///
/// # Safety
/// `eq` must be a live handle and `rates` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn mec_equilibrium_profile(eq: *const MecEquilibrium, rates: *mut f64, len: usize) -> MecStatus {
    guard(|| {
        let e = deref(eq, "equilibrium")?;
        let p = &e.trace.final_profile;
        let need = p.num_devices() * p.num_servers();
        if rates.is_null() {
            return fail(MecStatus::NullPointer, "rates is null");
        }
        if len != need {
            return fail(MecStatus::OutOfRange, format!("rates has {len} entries, expected {need}"));
        }
        let dst = std::slice::from_raw_parts_mut(rates, len);
        for (d, v) in dst.iter_mut().zip(p.rows().into_iter().flatten()) {
            *d = v;
        }
        Ok(())
    })
}

/// Mean response time of `device` at the final profile.
///
/// # Safety
/// `eq` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mec_equilibrium_response_time(eq: *const MecEquilibrium, device: usize, out: *mut f64) -> MecStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let e = deref(eq, "equilibrium")?;
        let times = e.trace.final_response_times();
        check_index(device, times.len(), "device")?;
        *out = times[device];
        Ok(())
    })
}

/// Mean response time of `device` under the row-major profile `rates`.
///
/// # Safety
/// `scenario` must be a live handle, `rates` valid for `len` reads and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mec_response_time(
    scenario: *const MecScenario,
    rates: *const f64,
    len: usize,
    device: usize,
    out: *mut f64,
) -> MecStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let s = deref(scenario, "scenario")?;
        check_index(device, s.scenario.num_devices(), "device")?;
        let p = read_profile(&s.scenario, rates, len)?;
        let t = analytic::response_time_md(&s.scenario, &p, device)?;
        if !t.is_finite() {
            return fail(MecStatus::Unstable, format!("device {device} uses a saturated server"));
        }
        *out = t;
        Ok(())
    })
}

/// Best response of `device` to the row-major profile `rates`: writes its
/// `servers` offload rates to `strategy` and the resulting response time to
/// `response_time`.
///
/// # Safety
/// `scenario` must be a live handle, `rates` valid for `len` reads, `strategy`
/// valid for `strategy_len` writes and `response_time` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mec_best_response(
    scenario: *const MecScenario,
    rates: *const f64,
    len: usize,
    device: usize,
    strategy: *mut f64,
    strategy_len: usize,
    response_time: *mut f64,
) -> MecStatus {
    guard(|| {
        let time_out = out_ref(response_time, "response_time")?;
        let s = deref(scenario, "scenario")?;
        let n = s.scenario.num_servers();
        check_index(device, s.scenario.num_devices(), "device")?;
        if strategy.is_null() {
            return fail(MecStatus::NullPointer, "strategy is null");
        }
        if strategy_len != n {
            return fail(MecStatus::OutOfRange, format!("strategy has {strategy_len} entries, expected {n}"));
        }
        let p = read_profile(&s.scenario, rates, len)?;
        let br = best_response(&s.scenario, &p, device)?;
        std::slice::from_raw_parts_mut(strategy, n).copy_from_slice(&br.strategy);
        *time_out = br.objective_t;
        Ok(())
    })
}

/// Message of the last error on this thread, or null if none. Free it with
/// [`mec_string_free`].
#[no_mangle]
pub extern "C" fn mec_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .and_then(|m| CString::new(m.replace('\0', " ")).ok())
            .map_or(ptr::null_mut(), CString::into_raw)
    })
}

/// # Safety
/// `s` must come from [`mec_last_error_message`] and not be freed yet; null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn mec_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
