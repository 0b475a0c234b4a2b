use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::ptr;

use chorediv_ffi::*;

const WARMUP: &str = r#"{
  "variant": "fixed_earnings",
  "tau": "100",
  "disutility": [["1", "3"], [null, "1"]],
  "earning": ["1", "1"]
}"#;

const EXAMPLE1: &str = r#"{
  "variant": "exchange",
  "tau": "10",
  "disutility": [["1", null], ["1", "2"]],
  "endowment": [["1", "1"], ["1", "1"]]
}"#;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
    cd_string_free(s);
    out
}

unsafe fn load(json: &str) -> *mut CdInstance {
    let mut h = ptr::null_mut();
    assert_eq!(cd_instance_from_json(c(json).as_ptr(), &mut h), CdStatus::Ok);
    h
}

unsafe fn last_error() -> String {
    let p = cd_last_error_message();
    assert!(!p.is_null());
    CStr::from_ptr(p).to_str().unwrap().to_owned()
}

#[test]
fn handle_lifecycle() {
    unsafe {
        let h = load(WARMUP);
        assert_eq!(cd_instance_agents(h), 2);
        assert_eq!(cd_instance_chores(h), 2);
        let mut s = ptr::null_mut();
        assert_eq!(cd_instance_to_json(h, &mut s), CdStatus::Ok);
        let text = take(s);
        let again = load(&text);
        assert_eq!(cd_instance_chores(again), 2);
        cd_instance_free(again);
        cd_instance_free(h);
        cd_instance_free(ptr::null_mut());
        cd_string_free(ptr::null_mut());
        assert_eq!(cd_instance_agents(ptr::null()), 0);
    }
}

#[test]
fn warmup_enumeration_finds_two_rays() {
    unsafe {
        let h = load(WARMUP);
        let mut s = ptr::null_mut();
        assert_eq!(cd_enumerate(h, ptr::null(), 0, &mut s), CdStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(s)).unwrap();
        assert_eq!(v["count"], 2);
        cd_instance_free(h);
    }
}

#[test]
fn failed_checks_still_report() {
    unsafe {
        let h = load(EXAMPLE1);
        let mut s = ptr::null_mut();
        assert_eq!(cd_check_conditions(h, &mut s), CdStatus::Failed);
        assert!(take(s).contains("condition1"));
        let mut s = ptr::null_mut();
        assert_eq!(cd_enumerate(h, ptr::null(), 0, &mut s), CdStatus::Failed);
        let v: serde_json::Value = serde_json::from_str(&take(s)).unwrap();
        assert_eq!(v["count"], 0);
        cd_instance_free(h);
    }
}

#[test]
fn verify_exact_candidate() {
    unsafe {
        let h = load(WARMUP);
        let good = r#"{"mode": "exact", "prices": ["1", "1"], "allocation": [["1", "0"], ["0", "1"]]}"#;
        let mut s = ptr::null_mut();
        assert_eq!(cd_verify(h, c(good).as_ptr(), ptr::null(), &mut s), CdStatus::Ok);
        take(s);
        let bad = r#"{"mode": "exact", "prices": ["1", "1"], "allocation": [["1", "1"], ["0", "0"]]}"#;
        let mut s = ptr::null_mut();
        assert_eq!(cd_verify(h, c(bad).as_ptr(), c("0").as_ptr(), &mut s), CdStatus::Failed);
        take(s);
        cd_instance_free(h);
    }
}

#[test]
fn errors_set_messages() {
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(cd_instance_from_json(ptr::null(), &mut h), CdStatus::NullPointer);
        assert!(last_error().contains("null"));
        assert_eq!(cd_instance_from_json(c("{oops").as_ptr(), &mut h), CdStatus::InvalidInput);
        assert!(h.is_null());
        assert!(!last_error().is_empty());
        let bad_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(
            cd_instance_from_json(bad_utf8.as_ptr().cast(), &mut h),
            CdStatus::InvalidUtf8
        );
        let mut s = ptr::null_mut();
        assert_eq!(cd_check_conditions(ptr::null(), &mut s), CdStatus::NullPointer);

        let w = load(WARMUP);
        assert_eq!(cd_enumerate(w, c("2").as_ptr(), 0, &mut s), CdStatus::InvalidInput);
        assert_eq!(cd_instance_chores(w), 2);
        assert!(cd_last_error_message().is_null() || !last_error().is_empty());
        assert_eq!(cd_instance_to_json(w, &mut s), CdStatus::Ok);
        assert!(cd_last_error_message().is_null());
        take(s);
        cd_instance_free(w);
    }
}

#[test]
fn generators() {
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(cd_gen_sat(c("p cnf 3 1\n1 2 3 0\n").as_ptr(), &mut h), CdStatus::Ok);
        assert_eq!((cd_instance_agents(h), cd_instance_chores(h)), (10, 9));
        let mut s = ptr::null_mut();
        assert_eq!(cd_check_conditions(h, &mut s), CdStatus::Failed);
        take(s);
        cd_instance_free(h);

        let game = r#"{"payoff": [["1/2","1/2","1","0"],["1/2","1/2","0","1"],["1","0","1","0"],["0","1","1/3","2/3"]]}"#;
        let mut h = ptr::null_mut();
        assert_eq!(cd_gen_polymatrix(c(game).as_ptr(), &mut h), CdStatus::Ok);
        assert_eq!((cd_instance_agents(h), cd_instance_chores(h)), (62, 32));
        let mut s = ptr::null_mut();
        assert_eq!(cd_check_conditions(h, &mut s), CdStatus::Ok);
        take(s);
        cd_instance_free(h);

        let mut h = ptr::null_mut();
        assert_eq!(cd_gen_polymatrix(c(r#"{"payoff": [["1","1"],["0","1"]]}"#).as_ptr(), &mut h), CdStatus::InvalidInput);
    }
}

#[test]
fn solver_single_chore() {
    let inst = r#"{"variant": "exchange", "tau": "5", "disutility": [["1"], ["2"]], "endowment": [["1"], ["1"]]}"#;
    unsafe {
        let h = load(inst);
        let mut s = ptr::null_mut();
        assert_eq!(cd_solve_fixedpoint(h, 0, 0.0, 0.0, &mut s), CdStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(s)).unwrap();
        assert_eq!(v["status"], "converged");
        cd_instance_free(h);
    }
}

#[test]
fn version_and_header() {
    unsafe {
        assert_eq!(CStr::from_ptr(cd_version()).to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/chorediv.h")).unwrap();
    for name in [
        "typedef struct CdInstance CdInstance",
        "CD_STATUS_INVALID_INPUT",
        "cd_instance_from_json",
        "cd_enumerate",
        "cd_solve_fixedpoint",
        "cd_string_free",
        "cd_last_error_message",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
