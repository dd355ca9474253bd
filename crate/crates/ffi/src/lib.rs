//! C interface to the parkauction simulator.
//!
//! Scenarios and finished runs are opaque handles owned by the caller and
//! released with the matching `*_free` function. Fallible calls return a
//! [`PkStatus`]; after a non-`PK_OK` status, [`pk_last_error`] describes the
//! failure on the calling thread. Strings returned by the library are freed
//! with [`pk_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use parkauction::auction::cost;
use parkauction::demand::Mix;
use parkauction::experiment::{run_scenario, write_run, ScenarioConfig, ScenarioResult};
use parkauction::sim::Behavior;
use parkauction::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Simulation = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkBehavior {
    Baseline = 0,
    Information = 1,
    Auction = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PkMix {
    Mix10 = 0,
    Mix25 = 1,
    Mix50 = 2,
}

/// Headline numbers of one run. Undefined means (no participants, no
/// reservations) are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PkSummary {
    pub vehicles: u64,
    pub participants: u64,
    pub route_length_m: f64,
    pub price_eur: f64,
    pub participant_price_eur: f64,
    pub non_participant_price_eur: f64,
    pub parking_distance_m: f64,
    pub participant_parking_distance_m: f64,
    pub flow_veh_h: f64,
    pub reservations_granted: u64,
    pub reservations_fulfilled: u64,
    pub reservation_success: f64,
    pub short_route_fraction: f64,
}

/// Opaque scenario configuration.
pub struct PkScenario {
    cfg: ScenarioConfig,
}

/// Opaque result of a finished run.
pub struct PkRun {
    result: ScenarioResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: PkStatus, msg: impl Into<String>) -> PkStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> PkStatus {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::PriceNormaliser(_) => PkStatus::Config,
        Error::Io(_) | Error::Csv(_) => PkStatus::Io,
        _ => PkStatus::Simulation,
    }
}

fn from_error(e: Error) -> PkStatus {
    fail(status_of(&e), e.to_string())
}

/// Run `f`, turning a panic into `PK_PANIC`.
fn guard(f: impl FnOnce() -> PkStatus) -> PkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(PkStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, PkStatus> {
    if p.is_null() {
        return Err(fail(PkStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PkStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

/// Message describing the last failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn pk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// A scenario with every setting at its default.
#[no_mangle]
pub extern "C" fn pk_scenario_default() -> *mut PkScenario {
    Box::into_raw(Box::new(PkScenario {
        cfg: ScenarioConfig::default(),
    }))
}

fn store_scenario(cfg: ScenarioConfig, out: *mut *mut PkScenario) -> PkStatus {
    if let Err(e) = cfg.validate() {
        return from_error(e);
    }
    // SAFETY: checked non-null by the callers.
    unsafe { *out = Box::into_raw(Box::new(PkScenario { cfg })) };
    PkStatus::Ok
}

/// Parse a scenario from TOML text. Missing keys take their defaults.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pk_scenario_from_toml(
    toml: *const c_char,
    out: *mut *mut PkScenario,
) -> PkStatus {
    guard(|| {
        if out.is_null() {
            return fail(PkStatus::NullPointer, "out is null");
        }
        let text = match str_arg(toml, "toml") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ScenarioConfig::from_toml(text) {
            Ok(cfg) => store_scenario(cfg, out),
            Err(e) => from_error(e),
        }
    })
}

/// Read a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pk_scenario_load(
    path: *const c_char,
    out: *mut *mut PkScenario,
) -> PkStatus {
    guard(|| {
        if out.is_null() {
            return fail(PkStatus::NullPointer, "out is null");
        }
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match ScenarioConfig::load(Path::new(path)) {
            Ok(cfg) => store_scenario(cfg, out),
            Err(e) => from_error(e),
        }
    })
}

/// The resolved scenario as TOML; free with [`pk_string_free`]. Null if
/// `scenario` is null.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pk_scenario_to_toml(scenario: *const PkScenario) -> *mut c_char {
    let Some(s) = scenario.as_ref() else {
        set_error("scenario is null");
        return ptr::null_mut();
    };
    CString::new(s.cfg.to_toml()).map_or(ptr::null_mut(), CString::into_raw)
}

unsafe fn with_scenario(
    scenario: *mut PkScenario,
    f: impl FnOnce(&mut ScenarioConfig) -> PkStatus,
) -> PkStatus {
    match scenario.as_mut() {
        Some(s) => guard(|| f(&mut s.cfg)),
        None => fail(PkStatus::NullPointer, "scenario is null"),
    }
}

/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pk_scenario_set_behavior(
    scenario: *mut PkScenario,
    behavior: PkBehavior,
) -> PkStatus {
    with_scenario(scenario, |c| {
        c.behavior = match behavior {
            PkBehavior::Baseline => Behavior::Baseline,
            PkBehavior::Information => Behavior::Information,
            PkBehavior::Auction => Behavior::Auction,
        };
        PkStatus::Ok
    })
}

/// Share of drivers using the app, in `[0, 1]`.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pk_scenario_set_penetration(
    scenario: *mut PkScenario,
    penetration: f64,
) -> PkStatus {
    with_scenario(scenario, |c| {
        if !(0.0..=1.0).contains(&penetration) {
            return fail(
                PkStatus::InvalidArgument,
                format!("penetration must lie in [0, 1], got {penetration}"),
            );
        }
        c.penetration = penetration;
        PkStatus::Ok
    })
}

/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pk_scenario_set_mix(scenario: *mut PkScenario, mix: PkMix) -> PkStatus {
    with_scenario(scenario, |c| {
        c.demand.mix = match mix {
            PkMix::Mix10 => Mix::Mix10,
            PkMix::Mix25 => Mix::Mix25,
            PkMix::Mix50 => Mix::Mix50,
        };
        PkStatus::Ok
    })
}

/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pk_scenario_set_seed(scenario: *mut PkScenario, seed: u64) -> PkStatus {
    with_scenario(scenario, |c| {
        c.seed = seed;
        PkStatus::Ok
    })
}

/// Number of visitors to simulate.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pk_scenario_set_drivers(
    scenario: *mut PkScenario,
    drivers: u32,
) -> PkStatus {
    with_scenario(scenario, |c| {
        if drivers == 0 {
            return fail(PkStatus::InvalidArgument, "drivers must be positive");
        }
        c.demand.drivers = drivers as usize;
        PkStatus::Ok
    })
}

/// # Safety
/// `scenario` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pk_scenario_free(scenario: *mut PkScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Simulate the scenario to completion. The scenario handle stays usable.
///
/// # Safety
/// `scenario` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pk_run(scenario: *const PkScenario, out: *mut *mut PkRun) -> PkStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(PkStatus::NullPointer, "scenario is null");
        };
        if out.is_null() {
            return fail(PkStatus::NullPointer, "out is null");
        }
        let mut cfg = s.cfg.clone();
        cfg.output.dir = None;
        match run_scenario(&cfg, None) {
            Ok(result) => {
                *out = Box::into_raw(Box::new(PkRun { result }));
                PkStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `run` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pk_run_summary(run: *const PkRun, out: *mut PkSummary) -> PkStatus {
    let (Some(r), false) = (run.as_ref(), out.is_null()) else {
        return fail(PkStatus::NullPointer, "run or out is null");
    };
    let s = r.result.summary();
    *out = PkSummary {
        vehicles: s.vehicles as u64,
        participants: s.route_length.participants.count as u64,
        route_length_m: s.route_length.overall.mean,
        price_eur: s.price.overall.mean,
        participant_price_eur: s.price.participants.mean,
        non_participant_price_eur: s.price.non_participants.mean,
        parking_distance_m: s.parking_distance.overall.mean,
        participant_parking_distance_m: s.parking_distance.participants.mean,
        flow_veh_h: s.flow.mean,
        reservations_granted: s.reservations_granted as u64,
        reservations_fulfilled: s.reservations_fulfilled as u64,
        reservation_success: s.reservation_success(),
        short_route_fraction: s.short_route_fraction,
    };
    PkStatus::Ok
}

/// Write the run's CSV files into `dir`, creating it if needed.
///
/// # Safety
/// `run` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pk_run_write(run: *const PkRun, dir: *const c_char) -> PkStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            return fail(PkStatus::NullPointer, "run is null");
        };
        let dir = match str_arg(dir, "dir") {
            Ok(d) => d,
            Err(s) => return s,
        };
        write_run(Path::new(dir), &r.result).map_or_else(from_error, |_| PkStatus::Ok)
    })
}

/// # Safety
/// `run` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pk_run_free(run: *mut PkRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Weighted parking cost `beta * price / p_max + (1 - beta) * distance / d_max`;
/// the distance term is zero when `d_max` is zero.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pk_parking_cost(
    beta: f64,
    price: f64,
    p_max: f64,
    distance: f64,
    d_max: f64,
    out: *mut f64,
) -> PkStatus {
    if out.is_null() {
        return fail(PkStatus::NullPointer, "out is null");
    }
    match cost(beta, price, p_max, distance, d_max) {
        Ok(c) => {
            *out = c;
            PkStatus::Ok
        }
        Err(e) => fail(PkStatus::InvalidArgument, e.to_string()),
    }
}
