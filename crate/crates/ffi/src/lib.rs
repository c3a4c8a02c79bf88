//! C interface to `wqmor`.
//!
//! Objects are opaque handles created by `wq_*_new`/`wq_*_load`/`wq_reduce`
//! and released with the matching `_free`. Every fallible call returns a
//! [`WqStatus`]; on failure the message is kept per thread and can be read
//! with [`wq_last_error`]. Matrices cross the boundary as dense row-major
//! `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::{DMatrix, DVector};

use wqmor::mor::{
    mbar_settling_time, mbar_travel_time, reduce_bpod, reduce_bt, reduce_pod, reduce_sbpod, MorOptions,
    OrderSelection, ReducedModel, SbpodMode,
};
use wqmor::netmodel::{load_network, HydraulicScenario, Network};
use wqmor::sim::{spectral_radius, spectral_radius_sparse};
use wqmor::stabilize::stabilize_posterior;
use wqmor::wqss::{assemble, simulate, step_input, IoPlacement, LtiSystem, StateSpace};
use wqmor::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Syntax = 3,
    Semantic = 4,
    Config = 5,
    Dimension = 6,
    Io = 7,
    Numerical = 8,
    Intractable = 9,
    Infeasible = 10,
    Panic = 11,
}

/// Reduction method.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WqMethod {
    Bt = 0,
    Pod = 1,
    Bpod = 2,
    Sbpod = 3,
}

/// Options for [`wq_reduce`]. A zero `fixed_order` selects the order by
/// `energy`; a zero `snapshot_length` uses the computed lower bound.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WqReduceOptions {
    pub method: WqMethod,
    pub fixed_order: usize,
    pub energy: f64,
    pub snapshot_length: usize,
    pub dense_threshold: usize,
}

/// Assembled full-order system (first hydraulic period).
pub struct WqSystem {
    sys: LtiSystem,
    network: Option<(Network, HydraulicScenario, IoPlacement)>,
}

/// Reduced-order model with its projections.
pub struct WqReduced {
    model: ReducedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> WqStatus {
    match e {
        Error::Syntax { .. } => WqStatus::Syntax,
        Error::Semantic { .. } => WqStatus::Semantic,
        Error::Config(_) => WqStatus::Config,
        Error::Dimension(_) => WqStatus::Dimension,
        Error::Io(_) => WqStatus::Io,
        Error::Numerical(_) => WqStatus::Numerical,
        Error::Intractable(_) => WqStatus::Intractable,
        Error::Infeasible(_) => WqStatus::Infeasible,
    }
}

/// Failure inside the shim, before or after the library call.
struct Fail(WqStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(WqStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> WqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            WqStatus::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            WqStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(WqStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn str_list<'a>(p: *const *const c_char, n: usize, what: &str) -> Result<Vec<&'a str>, Fail> {
    if n > 0 && p.is_null() {
        return Err(null(what));
    }
    (0..n).map(|i| str_arg(*p.add(i), what)).collect()
}

unsafe fn matrix_arg(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>, Fail> {
    if rows * cols == 0 {
        return Ok(DMatrix::zeros(rows, cols));
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(DMatrix::from_row_slice(rows, cols, std::slice::from_raw_parts(p, rows * cols)))
}

unsafe fn write_matrix(m: &DMatrix<f64>, out: *mut f64, what: &str) -> Result<(), Fail> {
    if m.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null(what));
    }
    let dst = std::slice::from_raw_parts_mut(out, m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dst[i * m.ncols() + j] = m[(i, j)];
        }
    }
    Ok(())
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn wq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Defaults: BT, order by 99.99 % energy, automatic snapshot length, dense
/// threshold 3000.
#[no_mangle]
pub extern "C" fn wq_reduce_options_default() -> WqReduceOptions {
    let d = MorOptions::default();
    WqReduceOptions {
        method: WqMethod::Bt,
        fixed_order: 0,
        energy: 0.9999,
        snapshot_length: 0,
        dense_threshold: d.dense_threshold,
    }
}

/// Loads a network file and assembles the system for the given boosters and
/// sensors (node ids). Only the first hydraulic period is kept.
///
/// # Safety
/// String arguments must be valid NUL-terminated strings; `boosters` and
/// `sensors` must point to that many of them; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wq_system_load(
    network_path: *const c_char,
    boosters: *const *const c_char,
    n_boosters: usize,
    sensors: *const *const c_char,
    n_sensors: usize,
    segments_per_pipe: usize,
    out: *mut *mut WqSystem,
) -> WqStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(network_path, "network_path")?;
        let b: Vec<(&str, f64)> = str_list(boosters, n_boosters, "boosters")?.into_iter().map(|s| (s, 1.0)).collect();
        let s = str_list(sensors, n_sensors, "sensors")?;
        let io = IoPlacement::new(&b, &s);
        let (net, scenario) = load_network(Path::new(path))?;
        let ltv = assemble(&net, &scenario, &io, segments_per_pipe)?;
        let sys = ltv.first().clone();
        *out = Box::into_raw(Box::new(WqSystem {
            sys,
            network: Some((net, scenario, io)),
        }));
        Ok(())
    })
}

/// Builds a system from dense row-major matrices.
///
/// # Safety
/// `a` must hold `n_x²` values, `b` `n_x·n_u`, `c` `n_y·n_x`, `d` `n_y·n_u`
/// (`d` may be null for zero); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wq_system_new_dense(
    n_x: usize,
    n_u: usize,
    n_y: usize,
    a: *const f64,
    b: *const f64,
    c: *const f64,
    d: *const f64,
    dt: f64,
    out: *mut *mut WqSystem,
) -> WqStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let am = matrix_arg(a, n_x, n_x, "a")?;
        let bm = matrix_arg(b, n_x, n_u, "b")?;
        let cm = matrix_arg(c, n_y, n_x, "c")?;
        let dm = if d.is_null() { DMatrix::zeros(n_y, n_u) } else { matrix_arg(d, n_y, n_u, "d")? };
        if !(dt > 0.0) {
            return Err(Fail(WqStatus::InvalidArgument, "dt must be positive".into()));
        }
        let sys = LtiSystem::from_dense(&am, &bm, &cm, &dm, dt)?;
        *out = Box::into_raw(Box::new(WqSystem { sys, network: None }));
        Ok(())
    })
}

/// Releases a system; null is ignored.
///
/// # Safety
/// `sys` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wq_system_free(sys: *mut WqSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// State, input and output dimensions.
///
/// # Safety
/// `sys` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn wq_system_dims(
    sys: *const WqSystem,
    n_x: *mut usize,
    n_u: *mut usize,
    n_y: *mut usize,
) -> WqStatus {
    guard(|| {
        let s = &sys.as_ref().ok_or_else(|| null("sys"))?.sys;
        *out_ptr(n_x, "n_x")? = s.n_x();
        *out_ptr(n_u, "n_u")? = s.n_u();
        *out_ptr(n_y, "n_y")? = s.n_y();
        Ok(())
    })
}

/// Spectral radius of `A`.
///
/// # Safety
/// `sys` must be a live handle; `rho` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wq_system_spectral_radius(sys: *const WqSystem, rho: *mut f64) -> WqStatus {
    guard(|| {
        let s = &sys.as_ref().ok_or_else(|| null("sys"))?.sys;
        *out_ptr(rho, "rho")? = spectral_radius_sparse(&s.a)?;
        Ok(())
    })
}

/// Snapshot-length lower bounds. `travel` is 0 for systems built from
/// matrices, which carry no network.
///
/// # Safety
/// `sys` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn wq_system_mbar(sys: *const WqSystem, travel: *mut usize, settling: *mut usize) -> WqStatus {
    guard(|| {
        let h = sys.as_ref().ok_or_else(|| null("sys"))?;
        let t = match &h.network {
            Some((net, sc, io)) => mbar_travel_time(net, sc, io)?.steps,
            None => 0,
        };
        let s = mbar_settling_time(&h.sys)?.steps;
        *out_ptr(travel, "travel")? = t;
        *out_ptr(settling, "settling")? = s;
        Ok(())
    })
}

/// Output of a constant input held for `steps` samples from a zero state,
/// written row-major into `y` (`n_y × steps`).
///
/// # Safety
/// `amplitudes` must hold `n_u` values and `y` room for `n_y·steps`.
#[no_mangle]
pub unsafe extern "C" fn wq_system_step_response(
    sys: *const WqSystem,
    amplitudes: *const f64,
    steps: usize,
    y: *mut f64,
) -> WqStatus {
    guard(|| {
        let s = &sys.as_ref().ok_or_else(|| null("sys"))?.sys;
        step_response(s, amplitudes, steps, y)
    })
}

unsafe fn step_response<S: StateSpace>(s: &S, amplitudes: *const f64, steps: usize, y: *mut f64) -> Result<(), Fail> {
    let amp = matrix_arg(amplitudes, 1, s.n_u(), "amplitudes")?;
    let u = step_input(amp.as_slice(), steps);
    let run = simulate(s, &u, None, steps, false)?;
    write_matrix(&run.y, y, "y")
}

fn order(o: &WqReduceOptions) -> OrderSelection {
    if o.fixed_order > 0 {
        OrderSelection::Fixed(o.fixed_order)
    } else {
        OrderSelection::Energy(o.energy)
    }
}

/// Reduces `sys`. SBPOD runs in priori mode, using the travel-time bound
/// when the system came from a network file.
///
/// # Safety
/// `sys` must be a live handle; `opts` readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wq_reduce(sys: *const WqSystem, opts: *const WqReduceOptions, out: *mut *mut WqReduced) -> WqStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let h = sys.as_ref().ok_or_else(|| null("sys"))?;
        let o = opts.as_ref().ok_or_else(|| null("opts"))?;
        let mor = MorOptions {
            dense_threshold: o.dense_threshold,
            ..MorOptions::default()
        };
        let travel = match &h.network {
            Some((net, sc, io)) => Some(mbar_travel_time(net, sc, io)?.steps),
            None => None,
        };
        let m = || -> Result<usize, Fail> {
            if o.snapshot_length > 0 {
                return Ok(o.snapshot_length);
            }
            Ok(travel.unwrap_or(0).max(mbar_settling_time(&h.sys)?.steps).max(1))
        };
        let model = match o.method {
            WqMethod::Bt => reduce_bt(&h.sys, order(o), &mor)?.0,
            WqMethod::Pod => reduce_pod(&h.sys, m()?, order(o), &mor)?.0,
            WqMethod::Bpod => reduce_bpod(&h.sys, m()?, order(o), &mor)?.0,
            WqMethod::Sbpod => {
                let mode = if o.snapshot_length > 0 {
                    SbpodMode::Posterior { m: o.snapshot_length }
                } else {
                    SbpodMode::priori(travel)
                };
                reduce_sbpod(&h.sys, order(o), mode, None, &mor)?.0
            }
        };
        *out = Box::into_raw(Box::new(WqReduced { model }));
        Ok(())
    })
}

/// Releases a reduced model; null is ignored.
///
/// # Safety
/// `red` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wq_reduced_free(red: *mut WqReduced) {
    if !red.is_null() {
        drop(Box::from_raw(red));
    }
}

/// Reduced order, input and output counts.
///
/// # Safety
/// `red` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn wq_reduced_dims(
    red: *const WqReduced,
    n_r: *mut usize,
    n_u: *mut usize,
    n_y: *mut usize,
) -> WqStatus {
    guard(|| {
        let m = &red.as_ref().ok_or_else(|| null("red"))?.model;
        *out_ptr(n_r, "n_r")? = m.n_r();
        *out_ptr(n_u, "n_u")? = m.b.ncols();
        *out_ptr(n_y, "n_y")? = m.c.nrows();
        Ok(())
    })
}

/// Spectral radius of `A_r`.
///
/// # Safety
/// `red` must be a live handle; `rho` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wq_reduced_spectral_radius(red: *const WqReduced, rho: *mut f64) -> WqStatus {
    guard(|| {
        let m = &red.as_ref().ok_or_else(|| null("red"))?.model;
        *out_ptr(rho, "rho")? = spectral_radius(&m.a)?;
        Ok(())
    })
}

/// Copies `A_r`, `B_r`, `C_r`, `D_r` row-major; any output may be null to skip it.
///
/// # Safety
/// Non-null outputs must have room for `n_r²`, `n_r·n_u`, `n_y·n_r` and `n_y·n_u` values.
#[no_mangle]
pub unsafe extern "C" fn wq_reduced_matrices(
    red: *const WqReduced,
    a: *mut f64,
    b: *mut f64,
    c: *mut f64,
    d: *mut f64,
) -> WqStatus {
    guard(|| {
        let m = &red.as_ref().ok_or_else(|| null("red"))?.model;
        for (mat, p, what) in [(&m.a, a, "a"), (&m.b, b, "b"), (&m.c, c, "c"), (&m.d, d, "d")] {
            if !p.is_null() {
                write_matrix(mat, p, what)?;
            }
        }
        Ok(())
    })
}

/// Step response of the reduced model; see [`wq_system_step_response`].
///
/// # Safety
/// As for [`wq_system_step_response`].
#[no_mangle]
pub unsafe extern "C" fn wq_reduced_step_response(
    red: *const WqReduced,
    amplitudes: *const f64,
    steps: usize,
    y: *mut f64,
) -> WqStatus {
    guard(|| {
        let m = &red.as_ref().ok_or_else(|| null("red"))?.model;
        step_response(m, amplitudes, steps, y)
    })
}

/// Replaces the `n × n` row-major matrix `a` by the nearest stabilized
/// matrix found by the posterior SDP and reports its spectral radius.
///
/// # Safety
/// `a` must hold `n²` values; `rho` may be null.
#[no_mangle]
pub unsafe extern "C" fn wq_stabilize(n: usize, a: *mut f64, rho: *mut f64) -> WqStatus {
    guard(|| {
        let am = matrix_arg(a, n, n, "a")?;
        let res = stabilize_posterior(&am)?;
        write_matrix(&res.a_stab, a, "a")?;
        if let Some(r) = rho.as_mut() {
            *r = res.rho_after;
        }
        Ok(())
    })
}

/// Simulates `x(k+1) = A x(k)` from `x0` for `steps` samples; used to check
/// stabilized matrices. Writes the final state into `x0`.
///
/// # Safety
/// `a` must hold `n²` values and `x0` `n`.
#[no_mangle]
pub unsafe extern "C" fn wq_free_response(n: usize, a: *const f64, x0: *mut f64, steps: usize) -> WqStatus {
    guard(|| {
        let am = matrix_arg(a, n, n, "a")?;
        let mut x = DVector::from_column_slice(matrix_arg(x0, 1, n, "x0")?.as_slice());
        for _ in 0..steps {
            x = &am * x;
        }
        write_matrix(&DMatrix::from_row_slice(1, n, x.as_slice()), x0, "x0")
    })
}
