//! C interface to the termdp solver.
//!
//! Instances and reports are opaque handles created by `termdp_*` functions
//! and released with the matching `*_free`. Every fallible call returns a
//! [`TermdpStatus`]; the message of the last failure on the calling thread
//! is available from [`termdp_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use termdp::envs::{build_maze, build_nonconvex_toy, load_instance, parse_instance, two_route_maze, MazeSpec};
use termdp::model::FiniteMdp;
use termdp::oracle::finite_horizon_value_iteration;
use termdp::solver::{solve, SolveOptions, SolveReport};
use termdp::Error;

/// Result of an interface call. Input, numerical and resource errors carry
/// the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermdpStatus {
    Ok = 0,
    NullPointer = 1,
    InputError = 2,
    NumericalError = 3,
    ResourceError = 4,
    InvalidUtf8 = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// Opaque validated instance.
pub struct TermdpMdp {
    inner: FiniteMdp,
}

/// Opaque solve report.
pub struct TermdpReport {
    inner: SolveReport,
}

/// Solver settings; start from [`termdp_solve_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermdpSolveOptions {
    pub beta: f64,
    pub degree: usize,
    pub max_iters: usize,
    pub tol_objective: f64,
    pub tol_residual: f64,
    /// When set, starts from a perturbed initial policy seeded by `seed`.
    pub seeded: bool,
    pub seed: u64,
    pub magnitude: f64,
}

/// Scalar summary of a report; information in nats.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TermdpValues {
    pub expected_cost: f64,
    pub information: f64,
    pub total: f64,
    pub residual: f64,
    pub free_energy: f64,
    pub iterations: usize,
    pub converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> TermdpStatus {
    match e.exit_code() {
        3 => TermdpStatus::NumericalError,
        4 => TermdpStatus::ResourceError,
        _ => TermdpStatus::InputError,
    }
}

/// Runs `f`, recording errors and containing panics.
fn guard<F>(f: F) -> TermdpStatus
where
    F: FnOnce() -> Result<(), (TermdpStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TermdpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TermdpStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (TermdpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (TermdpStatus, String) {
    (TermdpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (TermdpStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (TermdpStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (TermdpStatus, String)> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn termdp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses and validates an instance document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn termdp_mdp_from_json(json: *const c_char, out: *mut *mut TermdpMdp) -> TermdpStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let inner = parse_instance(text).map_err(lib_err)?;
        put(out, TermdpMdp { inner })
    })
}

/// Reads and validates an instance file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn termdp_mdp_load(path: *const c_char, out: *mut *mut TermdpMdp) -> TermdpStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        let inner = load_instance(path).map_err(lib_err)?;
        put(out, TermdpMdp { inner })
    })
}

/// Builds a maze from a maze document, or the shipped maze when `json` is null.
///
/// # Safety
/// `json` must be null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn termdp_mdp_maze(json: *const c_char, out: *mut *mut TermdpMdp) -> TermdpStatus {
    guard(|| {
        let spec: MazeSpec = if json.is_null() {
            two_route_maze()
        } else {
            let text = read_str(json, "json")?;
            serde_json::from_str(text).map_err(|e| lib_err(e.into()))?
        };
        let inner = build_maze(&spec).map_err(lib_err)?;
        put(out, TermdpMdp { inner })
    })
}

/// The two-step binary instance with a nonconvex objective.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn termdp_mdp_toy(out: *mut *mut TermdpMdp) -> TermdpStatus {
    guard(|| put(out, TermdpMdp { inner: build_nonconvex_toy() }))
}

/// Horizon of an instance, or 0 for a null handle.
///
/// # Safety
/// `mdp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn termdp_mdp_horizon(mdp: *const TermdpMdp) -> usize {
    mdp.as_ref().map_or(0, |m| m.inner.horizon())
}

/// Releases an instance; null is ignored.
///
/// # Safety
/// `mdp` must be null or a handle not yet released.
#[no_mangle]
pub unsafe extern "C" fn termdp_mdp_free(mdp: *mut TermdpMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// Default settings: uniform start, 10000 iterations, tolerances 1e-10
/// (objective) and 1e-8 (policy change).
#[no_mangle]
pub extern "C" fn termdp_solve_options_default(beta: f64, degree: usize) -> TermdpSolveOptions {
    let o = SolveOptions::new(beta, degree);
    TermdpSolveOptions {
        beta,
        degree,
        max_iters: o.max_iters,
        tol_objective: o.tol_objective,
        tol_residual: o.tol_residual,
        seeded: false,
        seed: 0,
        magnitude: 0.5,
    }
}

fn options(o: &TermdpSolveOptions) -> SolveOptions {
    let mut opts = SolveOptions::new(o.beta, o.degree);
    opts.max_iters = o.max_iters;
    opts.tol_objective = o.tol_objective;
    opts.tol_residual = o.tol_residual;
    if o.seeded {
        opts = opts.seeded(o.seed, o.magnitude);
    }
    opts
}

/// Runs the forward-backward iteration.
///
/// # Safety
/// `mdp` and `opts` must be live pointers and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn termdp_solve(
    mdp: *const TermdpMdp,
    opts: *const TermdpSolveOptions,
    out: *mut *mut TermdpReport,
) -> TermdpStatus {
    guard(|| {
        let mdp = mdp.as_ref().ok_or_else(|| null("mdp"))?;
        let opts = opts.as_ref().ok_or_else(|| null("opts"))?;
        let inner = solve(&mdp.inner, &options(opts)).map_err(lib_err)?;
        put(out, TermdpReport { inner })
    })
}

/// Copies the scalar summary of a report.
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn termdp_report_values(report: *const TermdpReport, out: *mut TermdpValues) -> TermdpStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = TermdpValues {
            expected_cost: r.value.expected_cost,
            information: r.value.information,
            total: r.value.total,
            residual: r.residual,
            free_energy: r.free_energy,
            iterations: r.iterations,
            converged: r.converged,
        };
        Ok(())
    })
}

/// Copies the policy slice of time `t` (0-based), row-major over
/// `(history, state, action)`. `len` receives the slice length; pass a null
/// `buf` to query it.
///
/// # Safety
/// `report` must be a live handle, `len` writable, and `buf` null or valid
/// for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn termdp_report_policy(
    report: *const TermdpReport,
    t: usize,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> TermdpStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.inner;
        let len = len.as_mut().ok_or_else(|| null("len"))?;
        let slices = r.policy.slices();
        let slice = slices
            .get(t)
            .ok_or_else(|| (TermdpStatus::OutOfRange, format!("time {t} is beyond the horizon {}", slices.len())))?;
        *len = slice.len();
        if buf.is_null() {
            return Ok(());
        }
        if cap < slice.len() {
            return Err((TermdpStatus::OutOfRange, format!("buffer holds {cap} values, {} needed", slice.len())));
        }
        ptr::copy_nonoverlapping(slice.as_ptr(), buf, slice.len());
        Ok(())
    })
}

/// The report as a JSON string, released with [`termdp_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn termdp_report_to_json(report: *const TermdpReport, out: *mut *mut c_char) -> TermdpStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = serde_json::to_string(r).map_err(|e| lib_err(e.into()))?;
        *out = CString::new(text).map_err(|e| (TermdpStatus::InputError, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet released.
#[no_mangle]
pub unsafe extern "C" fn termdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Releases a report; null is ignored.
///
/// # Safety
/// `report` must be null or a handle not yet released.
#[no_mangle]
pub unsafe extern "C" fn termdp_report_free(report: *mut TermdpReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Optimal expected cost of the cost-only problem.
///
/// # Safety
/// `mdp` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn termdp_value_iteration(mdp: *const TermdpMdp, out: *mut f64) -> TermdpStatus {
    guard(|| {
        let mdp = &mdp.as_ref().ok_or_else(|| null("mdp"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = finite_horizon_value_iteration(mdp).optimal_cost;
        Ok(())
    })
}
