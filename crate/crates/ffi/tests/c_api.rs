use std::ffi::{CStr, CString};
use std::ptr;

use parkauction_ffi::*;

fn last_error() -> String {
    let p = pk_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small() -> *mut PkScenario {
    let toml = CString::new("seed = 2\n[demand]\ndrivers = 600\nhorizon_s = 1800\n").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { pk_scenario_from_toml(toml.as_ptr(), &mut s) }, PkStatus::Ok);
    s
}

#[test]
fn run_and_summarise() {
    let s = small();
    unsafe {
        assert_eq!(pk_scenario_set_behavior(s, PkBehavior::Auction), PkStatus::Ok);
        assert_eq!(pk_scenario_set_penetration(s, 1.0), PkStatus::Ok);
        assert_eq!(pk_scenario_set_mix(s, PkMix::Mix50), PkStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(pk_run(s, &mut run), PkStatus::Ok);
        let mut sum = PkSummary::default();
        assert_eq!(pk_run_summary(run, &mut sum), PkStatus::Ok);
        assert_eq!(sum.vehicles, 600);
        assert_eq!(sum.participants, 600);
        assert!(sum.reservation_success > 0.9);
        assert!(sum.non_participant_price_eur.is_nan());

        let dir = tempfile::tempdir().unwrap();
        let d = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(pk_run_write(run, d.as_ptr()), PkStatus::Ok);
        assert!(dir.path().join("events.csv").exists());
        pk_run_free(run);
        pk_scenario_free(s);
    }
}

#[test]
fn runs_are_reproducible() {
    let s = small();
    let summary = || unsafe {
        let mut run = ptr::null_mut();
        assert_eq!(pk_run(s, &mut run), PkStatus::Ok);
        let mut sum = PkSummary::default();
        pk_run_summary(run, &mut sum);
        pk_run_free(run);
        sum
    };
    unsafe { pk_scenario_set_seed(s, 9) };
    let a = summary();
    let b = summary();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    unsafe { pk_scenario_free(s) };
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut s = ptr::null_mut();
        let bad = CString::new("[demand]\ndrivers = 0\n").unwrap();
        assert_eq!(pk_scenario_from_toml(bad.as_ptr(), &mut s), PkStatus::Config);
        assert!(s.is_null());
        assert!(last_error().contains("drivers"), "{}", last_error());

        let garbage = CString::new("seed = [").unwrap();
        assert_eq!(pk_scenario_from_toml(garbage.as_ptr(), &mut s), PkStatus::Config);

        let missing = CString::new("/nonexistent/scenario.toml").unwrap();
        assert_ne!(pk_scenario_load(missing.as_ptr(), &mut s), PkStatus::Ok);

        assert_eq!(pk_scenario_from_toml(ptr::null(), &mut s), PkStatus::NullPointer);
        assert_eq!(pk_scenario_set_seed(ptr::null_mut(), 1), PkStatus::NullPointer);
        assert_eq!(pk_run(ptr::null(), &mut ptr::null_mut()), PkStatus::NullPointer);

        let s = pk_scenario_default();
        assert_eq!(pk_scenario_set_penetration(s, -0.1), PkStatus::InvalidArgument);
        assert_eq!(pk_scenario_set_drivers(s, 0), PkStatus::InvalidArgument);
        assert!(last_error().contains("drivers"));
        pk_scenario_free(s);

        // Freeing null is a no-op.
        pk_scenario_free(ptr::null_mut());
        pk_run_free(ptr::null_mut());
        pk_string_free(ptr::null_mut());
    }
}

#[test]
fn load_round_trips_through_toml() {
    unsafe {
        let s = pk_scenario_default();
        pk_scenario_set_seed(s, 77);
        pk_scenario_set_behavior(s, PkBehavior::Information);
        let text = pk_scenario_to_toml(s);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.toml");
        std::fs::write(&path, CStr::from_ptr(text).to_bytes()).unwrap();
        pk_string_free(text);
        let p = CString::new(path.to_str().unwrap()).unwrap();
        let mut back = ptr::null_mut();
        assert_eq!(pk_scenario_load(p.as_ptr(), &mut back), PkStatus::Ok);
        let again = pk_scenario_to_toml(back);
        let t = CStr::from_ptr(again).to_str().unwrap();
        assert!(t.contains("seed = 77") && t.contains("behavior = \"information\""), "{t}");
        pk_string_free(again);
        pk_scenario_free(back);
        pk_scenario_free(s);
    }
}

#[test]
fn cost_function() {
    let mut c = f64::NAN;
    unsafe {
        assert_eq!(pk_parking_cost(0.01, 0.5, 5.0, 0.0, 0.0, &mut c), PkStatus::Ok);
        assert!((c - 0.001).abs() < 1e-15);
        assert_eq!(pk_parking_cost(0.5, 1.0, 1.0, 300.0, 600.0, &mut c), PkStatus::Ok);
        assert!((c - 0.75).abs() < 1e-15);
        assert_eq!(pk_parking_cost(0.5, 1.0, 1.0, 1.0, 1.0, ptr::null_mut()), PkStatus::NullPointer);
    }
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/parkauction.h")).unwrap();
    for name in [
        "pk_scenario_default",
        "pk_scenario_from_toml",
        "pk_scenario_load",
        "pk_run",
        "pk_run_summary",
        "pk_run_write",
        "pk_run_free",
        "pk_last_error",
        "typedef struct PkScenario PkScenario",
        "PK_STATUS_PANIC = 6",
    ] {
        assert!(h.contains(name), "{name}");
    }
}
