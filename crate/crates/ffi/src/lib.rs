//! C interface.
//!
//! Scenarios and trajectories are opaque handles released with the matching
//! `*_free` function. Every fallible call returns a [`SweepStatus`]; on
//! failure the message is available from [`sweep_last_error`] on the same
//! thread. Output pointers are written only on success unless a function
//! says otherwise.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sweep_ocp::cli::{reproduce, Built, Controls, ReproduceOptions, ScenarioFile};
use sweep_ocp::dynamics::{write_csv, ControlSignal, Trajectory};
use sweep_ocp::ocp::{solve_constant_control, OcpError, SolveStatus};
use sweep_ocp::optimality::{recover_multipliers, OptimalityError, RecoveryOptions, XiMode};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidScenario = 3,
    Simulation = 4,
    NoFeasiblePoint = 5,
    BudgetExhausted = 6,
    NoCertificate = 7,
    Io = 8,
    Panic = 9,
}

/// A validated scenario and its discrete problem.
pub struct SweepScenario {
    file: ScenarioFile,
    built: Built,
}

/// A discrete arc together with the controls that produced it.
pub struct SweepTrajectory {
    traj: Trajectory,
    controls: ControlSignal,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: SweepStatus, msg: impl Into<String>) -> SweepStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> SweepStatus) -> SweepStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == SweepStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(_) => fail(SweepStatus::Panic, "internal panic"),
    }
}

fn ocp_status(e: &OcpError) -> SweepStatus {
    match e {
        OcpError::NoFeasiblePoint(_) => SweepStatus::NoFeasiblePoint,
        OcpError::Dynamics(_) => SweepStatus::Simulation,
        _ => SweepStatus::InvalidArgument,
    }
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn sweep_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sweep_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a scenario from a NUL-terminated JSON document.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sweep_scenario_from_json(json: *const c_char, out: *mut *mut SweepScenario) -> SweepStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(SweepStatus::NullPointer, "null argument");
        }
        let Ok(text) = CStr::from_ptr(json).to_str() else {
            return fail(SweepStatus::InvalidArgument, "scenario is not UTF-8");
        };
        let file = match ScenarioFile::parse(text) {
            Ok(f) => f,
            Err(e) => return fail(SweepStatus::InvalidScenario, e.to_string()),
        };
        store_scenario(file, out)
    })
}

/// The built-in two-vehicle scenario.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sweep_scenario_builtin(out: *mut *mut SweepScenario) -> SweepStatus {
    guard(|| {
        if out.is_null() {
            return fail(SweepStatus::NullPointer, "null argument");
        }
        store_scenario(ScenarioFile::two_vehicles(), out)
    })
}

unsafe fn store_scenario(file: ScenarioFile, out: *mut *mut SweepScenario) -> SweepStatus {
    match file.build(None) {
        Ok(built) => {
            *out = Box::into_raw(Box::new(SweepScenario { file, built }));
            SweepStatus::Ok
        }
        Err(e) => fail(SweepStatus::InvalidScenario, e.to_string()),
    }
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sweep_scenario_free(scenario: *mut SweepScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// State dimension, control dimension, face count and step count.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sweep_scenario_dims(
    scenario: *const SweepScenario,
    n: *mut usize,
    d: *mut usize,
    s: *mut usize,
    k: *mut usize,
) -> SweepStatus {
    guard(|| {
        if scenario.is_null() || n.is_null() || d.is_null() || s.is_null() || k.is_null() {
            return fail(SweepStatus::NullPointer, "null argument");
        }
        let p = &(*scenario).built.problem;
        *n = p.polyhedron.dim();
        *d = p.control_box.dim();
        *s = p.polyhedron.face_count();
        *k = p.k;
        SweepStatus::Ok
    })
}

unsafe fn read_controls(sc: &SweepScenario, controls: *const f64, len: usize) -> Result<ControlSignal, SweepStatus> {
    if controls.is_null() {
        return Err(fail(SweepStatus::NullPointer, "null controls"));
    }
    let p = &sc.built.problem;
    let (k, d) = (p.k, p.control_box.dim());
    let data = std::slice::from_raw_parts(controls, len);
    let spec = if len == d {
        Controls::Constant(data.to_vec())
    } else if len == k * d {
        Controls::PerStep(data.chunks(d).map(<[f64]>::to_vec).collect())
    } else {
        return Err(fail(
            SweepStatus::InvalidArgument,
            format!("expected {d} or {} control values, got {len}", k * d),
        ));
    };
    spec.to_signal(k, d).map_err(|m| fail(SweepStatus::InvalidArgument, m))
}

/// Simulates on `[0, final_time]`. `controls` holds either one control
/// (`d` values) or one per step (`k * d` values, row by row).
///
/// # Safety
/// `controls` must point to `len` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sweep_simulate(
    scenario: *const SweepScenario,
    controls: *const f64,
    len: usize,
    final_time: f64,
    out: *mut *mut SweepTrajectory,
) -> SweepStatus {
    guard(|| {
        if scenario.is_null() || out.is_null() {
            return fail(SweepStatus::NullPointer, "null argument");
        }
        let sc = &*scenario;
        let signal = match read_controls(sc, controls, len) {
            Ok(s) => s,
            Err(s) => return s,
        };
        if !(final_time > 0.0 && final_time.is_finite()) {
            return fail(SweepStatus::InvalidArgument, "final time must be positive");
        }
        match sc.built.problem.evaluate(signal, final_time) {
            Ok(sol) => {
                *out = Box::into_raw(Box::new(SweepTrajectory {
                    traj: sol.trajectory,
                    controls: sol.controls,
                }));
                SweepStatus::Ok
            }
            Err(e) => fail(ocp_status(&e), e.to_string()),
        }
    })
}

/// Searches constant controls and the final time. On success `out` holds
/// the best arc and `cost` its objective value. A best-found arc is also
/// returned with `BUDGET_EXHAUSTED`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sweep_solve_constant(
    scenario: *const SweepScenario,
    out: *mut *mut SweepTrajectory,
    cost: *mut f64,
) -> SweepStatus {
    guard(|| {
        if scenario.is_null() || out.is_null() || cost.is_null() {
            return fail(SweepStatus::NullPointer, "null argument");
        }
        let sc = &*scenario;
        match solve_constant_control(&sc.built.problem, &sc.file.constant_search.options()) {
            Ok(res) => {
                *cost = res.solution.cost_value;
                *out = Box::into_raw(Box::new(SweepTrajectory {
                    traj: res.solution.trajectory,
                    controls: res.solution.controls,
                }));
                match res.status {
                    SolveStatus::Converged => SweepStatus::Ok,
                    SolveStatus::BudgetExhausted => fail(SweepStatus::BudgetExhausted, "evaluation budget exhausted"),
                }
            }
            Err(e) => fail(ocp_status(&e), e.to_string()),
        }
    })
}

/// Releases a trajectory. Null is ignored.
///
/// # Safety
/// `traj` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sweep_trajectory_free(traj: *mut SweepTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of steps `k`; zero for null.
///
/// # Safety
/// `traj` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn sweep_trajectory_steps(traj: *const SweepTrajectory) -> usize {
    if traj.is_null() {
        0
    } else {
        (*traj).traj.k()
    }
}

/// Final time; NaN for null.
///
/// # Safety
/// `traj` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn sweep_trajectory_final_time(traj: *const SweepTrajectory) -> f64 {
    if traj.is_null() {
        f64::NAN
    } else {
        (*traj).traj.final_time()
    }
}

/// Copies state `index` (`0..=k`) into `buf`, which holds `len` doubles.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sweep_trajectory_state(
    traj: *const SweepTrajectory,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> SweepStatus {
    guard(|| {
        if traj.is_null() || buf.is_null() {
            return fail(SweepStatus::NullPointer, "null argument");
        }
        let states = &(*traj).traj.states;
        let Some(x) = states.get(index) else {
            return fail(SweepStatus::InvalidArgument, format!("index {index} beyond {} states", states.len()));
        };
        if len < x.len() {
            return fail(SweepStatus::InvalidArgument, format!("buffer needs {} entries", x.len()));
        }
        std::slice::from_raw_parts_mut(buf, x.len()).copy_from_slice(x.as_slice());
        SweepStatus::Ok
    })
}

/// Copies the control of step `index` (`0..k`) into `buf`.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sweep_trajectory_control(
    traj: *const SweepTrajectory,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> SweepStatus {
    guard(|| {
        if traj.is_null() || buf.is_null() {
            return fail(SweepStatus::NullPointer, "null argument");
        }
        let values = (*traj).controls.values();
        let Some(u) = values.get(index) else {
            return fail(SweepStatus::InvalidArgument, format!("index {index} beyond {} controls", values.len()));
        };
        if len < u.len() {
            return fail(SweepStatus::InvalidArgument, format!("buffer needs {} entries", u.len()));
        }
        std::slice::from_raw_parts_mut(buf, u.len()).copy_from_slice(u.as_slice());
        SweepStatus::Ok
    })
}

/// Writes the arc as CSV to `path`.
///
/// # Safety
/// `path` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn sweep_trajectory_write_csv(traj: *const SweepTrajectory, path: *const c_char) -> SweepStatus {
    guard(|| {
        if traj.is_null() || path.is_null() {
            return fail(SweepStatus::NullPointer, "null argument");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(SweepStatus::InvalidArgument, "path is not UTF-8");
        };
        let file = match std::fs::File::create(path) {
            Ok(f) => f,
            Err(e) => return fail(SweepStatus::Io, format!("{path}: {e}")),
        };
        match write_csv(&(*traj).traj, file) {
            Ok(()) => SweepStatus::Ok,
            Err(e) => fail(SweepStatus::Io, e.to_string()),
        }
    })
}

/// Searches for optimality multipliers for `traj` under the scenario.
/// `exact_tracking` nonzero evaluates the tracking terms against the
/// scenario's reference. Writes `μ₀` on success; returns `NO_CERTIFICATE`
/// when no bundle passes.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sweep_verify_recover(
    scenario: *const SweepScenario,
    traj: *const SweepTrajectory,
    exact_tracking: c_int,
    tol: f64,
    mu0: *mut f64,
) -> SweepStatus {
    guard(|| {
        if scenario.is_null() || traj.is_null() || mu0.is_null() {
            return fail(SweepStatus::NullPointer, "null argument");
        }
        if !(tol > 0.0) {
            return fail(SweepStatus::InvalidArgument, "tolerance must be positive");
        }
        let sc = &*scenario;
        let t = &*traj;
        let mut prob = sc.built.problem.clone();
        prob.k = t.traj.k();
        let mut opts = RecoveryOptions::default();
        opts.verify.tol = tol;
        opts.verify.rule = sc.file.modes.dual_index_rule;
        opts.verify.xi_mode = if exact_tracking != 0 { XiMode::Exact } else { XiMode::Convergence };
        match recover_multipliers(&t.traj, &t.controls, &prob, &opts) {
            Ok(r) => {
                *mu0 = r.multipliers.mu0;
                SweepStatus::Ok
            }
            Err(OptimalityError::NoCertificate { worst, .. }) => fail(
                SweepStatus::NoCertificate,
                format!("no certificate; worst residual {worst:e}"),
            ),
            Err(e) => fail(SweepStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Runs the built-in end-to-end comparison with `k` steps and returns the
/// JSON report through `json` (free with [`sweep_string_free`]). `passed`
/// receives 1 when every compared quantity is within tolerance.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sweep_reproduce(k: usize, json: *mut *mut c_char, passed: *mut c_int) -> SweepStatus {
    guard(|| {
        if json.is_null() || passed.is_null() {
            return fail(SweepStatus::NullPointer, "null argument");
        }
        if k < 2 {
            return fail(SweepStatus::InvalidArgument, "k must be at least 2");
        }
        let opts = ReproduceOptions {
            k,
            ..ReproduceOptions::default()
        };
        match reproduce(&opts) {
            Ok(report) => {
                *passed = c_int::from(report.outcome.exit_code == 0);
                *json = CString::new(report.to_json()).expect("json has no NUL").into_raw();
                SweepStatus::Ok
            }
            Err(e) => fail(SweepStatus::Simulation, e.to_string()),
        }
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sweep_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
