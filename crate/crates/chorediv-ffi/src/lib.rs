//! C interface to `chorediv`.
//!
//! Instances live behind an opaque [`CdInstance`] handle. Reports cross the
//! boundary as JSON strings owned by the library; release them with
//! [`cd_string_free`]. Every entry point returns a [`CdStatus`], and on error
//! a message is available from [`cd_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chorediv::check::{verify_equilibrium, FloatTolerances};
use chorediv::enumerate::{enumerate_equilibria, EnumerationLimits};
use chorediv::fixedpoint::{solve, SolveOutcome, SolverConfig};
use chorediv::graph::check_conditions;
use chorediv::model::parse_rational;
use chorediv::polymatrix::{build_polymatrix_instance, PolymatrixGame};
use chorediv::sat::{build_sat_instance, CnfFormula, SatGadgetParams};
use chorediv::{AnyCandidate, Instance, Rational};

/// Result codes. `CD_STATUS_FAILED` means the call ran and its check came out
/// negative (conditions fail, candidate rejected, no equilibrium found); the
/// output report is still written.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdStatus {
    Ok = 0,
    Failed = 1,
    NullPointer = 2,
    InvalidUtf8 = 3,
    InvalidInput = 4,
    Panic = 5,
}

/// Opaque instance handle.
pub struct CdInstance {
    inner: Instance,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Error(CdStatus, String);

impl Error {
    fn input(e: impl std::fmt::Display) -> Self {
        Error(CdStatus::InvalidInput, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<CdStatus, Error>) -> CdStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(Error(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CdStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Error> {
    if p.is_null() {
        return Err(Error(CdStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error(CdStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn read_epsilon(p: *const c_char) -> Result<Rational, Error> {
    if p.is_null() {
        return Ok(Rational::from_integer(0.into()));
    }
    parse_rational(read_str(p, "epsilon")?).map_err(Error::input)
}

unsafe fn instance<'a>(h: *const CdInstance) -> Result<&'a Instance, Error> {
    h.as_ref()
        .map(|h| &h.inner)
        .ok_or_else(|| Error(CdStatus::NullPointer, "instance handle is null".into()))
}

unsafe fn write_string(out: *mut *mut c_char, text: String) -> Result<(), Error> {
    if out.is_null() {
        return Err(Error(CdStatus::NullPointer, "output pointer is null".into()));
    }
    let c = CString::new(text).map_err(Error::input)?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn write_handle(out: *mut *mut CdInstance, inner: Instance) -> Result<(), Error> {
    if out.is_null() {
        return Err(Error(CdStatus::NullPointer, "output pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(CdInstance { inner }));
    Ok(())
}

fn verdict(passed: bool) -> CdStatus {
    if passed {
        CdStatus::Ok
    } else {
        CdStatus::Failed
    }
}

/// Parses an instance from JSON. On success `*out` receives a handle to be
/// released with `cd_instance_free`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cd_instance_from_json(json: *const c_char, out: *mut *mut CdInstance) -> CdStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let inst = Instance::from_json(text).map_err(Error::input)?;
        write_handle(out, inst)?;
        Ok(CdStatus::Ok)
    })
}

/// Serializes an instance back to JSON.
///
/// # Safety
/// `inst` must come from this library; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cd_instance_to_json(inst: *const CdInstance, out: *mut *mut c_char) -> CdStatus {
    guard(|| {
        let text = instance(inst)?.to_json().map_err(Error::input)?;
        write_string(out, text)?;
        Ok(CdStatus::Ok)
    })
}

/// # Safety
/// `inst` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cd_instance_free(inst: *mut CdInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Number of agents, or 0 for a null handle.
///
/// # Safety
/// `inst` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cd_instance_agents(inst: *const CdInstance) -> usize {
    inst.as_ref().map_or(0, |h| h.inner.agents())
}

/// Number of chores, or 0 for a null handle.
///
/// # Safety
/// `inst` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cd_instance_chores(inst: *const CdInstance) -> usize {
    inst.as_ref().map_or(0, |h| h.inner.chores())
}

/// Writes the conditions report as JSON. Returns `CD_STATUS_FAILED` when a
/// condition fails.
///
/// # Safety
/// Pointers must be valid as documented at the top of the header.
#[no_mangle]
pub unsafe extern "C" fn cd_check_conditions(inst: *const CdInstance, out_json: *mut *mut c_char) -> CdStatus {
    guard(|| {
        let report = check_conditions(instance(inst)?);
        write_string(out_json, serde_json::to_string(&report).map_err(Error::input)?)?;
        Ok(verdict(report.passed()))
    })
}

/// Verifies a candidate (exact or float JSON). `epsilon` may be null for 0.
///
/// # Safety
/// Pointers must be valid; `epsilon` may be null.
#[no_mangle]
pub unsafe extern "C" fn cd_verify(
    inst: *const CdInstance,
    candidate_json: *const c_char,
    epsilon: *const c_char,
    out_json: *mut *mut c_char,
) -> CdStatus {
    guard(|| {
        let inst = instance(inst)?;
        let cand = AnyCandidate::from_json(read_str(candidate_json, "candidate")?).map_err(Error::input)?;
        let eps = read_epsilon(epsilon)?;
        let report = verify_equilibrium(inst, &cand, &eps, FloatTolerances::default()).map_err(Error::input)?;
        write_string(out_json, serde_json::to_string(&report).map_err(Error::input)?)?;
        Ok(verdict(report.passed()))
    })
}

/// Lists all equilibria exactly. `cap` bounds the number of patterns tried
/// (0 means the default). Returns `CD_STATUS_FAILED` when none exist.
///
/// # Safety
/// Pointers must be valid; `epsilon` may be null.
#[no_mangle]
pub unsafe extern "C" fn cd_enumerate(
    inst: *const CdInstance,
    epsilon: *const c_char,
    cap: u64,
    out_json: *mut *mut c_char,
) -> CdStatus {
    guard(|| {
        let inst = instance(inst)?;
        let eps = read_epsilon(epsilon)?;
        let limits = if cap == 0 {
            EnumerationLimits::default()
        } else {
            EnumerationLimits {
                pattern_cap: cap as u128,
            }
        };
        let set = enumerate_equilibria(inst, &eps, limits).map_err(Error::input)?;
        write_string(out_json, set.to_json().to_string())?;
        Ok(verdict(!set.is_empty()))
    })
}

/// Runs the fixed-point iteration. Returns `CD_STATUS_FAILED` if it stalls.
/// Non-positive `max_iters`, `tol` or `damping` select the defaults.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cd_solve_fixedpoint(
    inst: *const CdInstance,
    max_iters: u64,
    tol: f64,
    damping: f64,
    out_json: *mut *mut c_char,
) -> CdStatus {
    guard(|| {
        let inst = instance(inst)?;
        let mut cfg = SolverConfig::default();
        if max_iters > 0 {
            cfg.max_iters = max_iters as usize;
        }
        if tol > 0.0 {
            cfg.residual_tol = tol;
        }
        if damping > 0.0 {
            cfg.damping = damping;
        }
        let outcome = solve(inst, &cfg).map_err(Error::input)?;
        let (report, passed) = match outcome {
            SolveOutcome::Converged {
                candidate,
                residual,
                iterations,
                polished,
                report,
                ..
            } => {
                let cand = AnyCandidate::Float(candidate).to_json().map_err(Error::input)?;
                let cand: serde_json::Value = serde_json::from_str(&cand).map_err(Error::input)?;
                let passed = report.passed();
                (
                    serde_json::json!({
                        "status": "converged",
                        "residual": residual,
                        "iterations": iterations,
                        "polished": polished,
                        "verification": report,
                        "equilibrium": cand,
                    }),
                    passed,
                )
            }
            SolveOutcome::Stalled { trace } => (
                serde_json::json!({"status": "stalled", "iterations": trace.len()}),
                false,
            ),
        };
        write_string(out_json, report.to_string())?;
        Ok(verdict(passed))
    })
}

/// Builds the fixed-earnings market of a DIMACS CNF formula with the default
/// gadget constants.
///
/// # Safety
/// `dimacs` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cd_gen_sat(dimacs: *const c_char, out: *mut *mut CdInstance) -> CdStatus {
    guard(|| {
        let phi = CnfFormula::parse_dimacs(read_str(dimacs, "dimacs")?).map_err(Error::input)?;
        let inst = build_sat_instance(&phi, &SatGadgetParams::default()).map_err(Error::input)?;
        write_handle(out, inst)?;
        Ok(CdStatus::Ok)
    })
}

/// Builds the layered exchange market of a polymatrix game given as
/// `{"payoff": [[...]]}`.
///
/// # Safety
/// `game_json` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cd_gen_polymatrix(game_json: *const c_char, out: *mut *mut CdInstance) -> CdStatus {
    guard(|| {
        let game = PolymatrixGame::from_json(read_str(game_json, "game")?).map_err(Error::input)?;
        let (inst, _) = build_polymatrix_instance(&game).map_err(Error::input)?;
        write_handle(out, inst)?;
        Ok(CdStatus::Ok)
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn cd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
