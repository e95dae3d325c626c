//! C ABI over the varying-dimension Brownian motion laboratory.
//!
//! Handles are opaque pointers owned by the library; every fallible call
//! returns a [`BmvdStatus`] and stores a message retrievable through
//! [`bmvd_last_error_message`] on failure. Points of the glued space cross
//! the boundary as a tagged struct: a leg coordinate, the darning point,
//! or plane coordinates.
//!
//! Entry points null-check every pointer before touching it; beyond that,
//! callers uphold the usual C contract that non-null pointers are valid
//! for the declared lengths.
#![allow(clippy::not_unsafe_ptr_arg_deref)]

use bmvd::drift::DriftSpec;
use bmvd::geometry::{rho, DomainSpec, EPoint, ModelParams};
use bmvd::green::green_pde;
use bmvd::kernels::{envelope, EnvelopeVariant};
use bmvd::pde::{free_space_grid, solve_kernel, KernelTable, SolveOptions};
use bmvd::sim::{estimate_density, simulate_radial, SimConfig};
use std::cell::RefCell;
use std::ffi::{c_char, CString};

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = CString::new(message.into()).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

/// Outcome of a C-ABI call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum BmvdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DomainError = 3,
    SolverError = 4,
    SimulationError = 5,
}

/// Variant tag of a boundary-crossing point.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum BmvdPointTag {
    /// Half-line point: `a` is the distance from the darning point.
    Leg = 0,
    /// The darning point itself; coordinates ignored.
    Star = 1,
    /// Plane point with coordinates `(a, b)`.
    Plane = 2,
}

/// A point of the glued space.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct BmvdPoint {
    pub tag: BmvdPointTag,
    pub a: f64,
    pub b: f64,
}

/// Opaque model-parameter handle.
pub struct BmvdParams {
    params: ModelParams,
}

/// Opaque kernel-table handle from a deterministic solve.
pub struct BmvdKernelTable {
    table: KernelTable,
    params: ModelParams,
}

fn to_point(p: &BmvdPoint, params: &ModelParams) -> Result<EPoint, String> {
    match p.tag {
        BmvdPointTag::Leg => EPoint::leg(p.a).map_err(|e| e.to_string()),
        BmvdPointTag::Star => Ok(EPoint::Star),
        BmvdPointTag::Plane => EPoint::plane(p.a, p.b, params).map_err(|e| e.to_string()),
    }
}

/// Last error message of the current thread, or null. The pointer stays
/// valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn bmvd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |s| s.as_ptr())
    })
}

/// Creates a model-parameter handle for `(eps, p)`.
#[no_mangle]
pub extern "C" fn bmvd_params_new(eps: f64, p: f64, out: *mut *mut BmvdParams) -> BmvdStatus {
    if out.is_null() {
        return BmvdStatus::NullPointer;
    }
    match ModelParams::new(eps, p) {
        Ok(params) => {
            unsafe { *out = Box::into_raw(Box::new(BmvdParams { params })) };
            BmvdStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            BmvdStatus::InvalidArgument
        }
    }
}

/// Frees a parameter handle; null is allowed.
#[no_mangle]
pub extern "C" fn bmvd_params_free(params: *mut BmvdParams) {
    if !params.is_null() {
        drop(unsafe { Box::from_raw(params) });
    }
}

/// Interface skewness `(2 pi eps - p) / (2 pi eps + p)`.
#[no_mangle]
pub extern "C" fn bmvd_params_eta(params: *const BmvdParams) -> f64 {
    if params.is_null() {
        return f64::NAN;
    }
    unsafe { &*params }.params.eta()
}

/// Geodesic distance between two points.
#[no_mangle]
pub extern "C" fn bmvd_rho(
    params: *const BmvdParams,
    x: BmvdPoint,
    y: BmvdPoint,
    out: *mut f64,
) -> BmvdStatus {
    if params.is_null() || out.is_null() {
        return BmvdStatus::NullPointer;
    }
    let p = &unsafe { &*params }.params;
    match (to_point(&x, p), to_point(&y, p)) {
        (Ok(a), Ok(b)) => {
            unsafe { *out = rho(&a, &b, p) };
            BmvdStatus::Ok
        }
        (Err(e), _) | (_, Err(e)) => {
            set_error(e);
            BmvdStatus::InvalidArgument
        }
    }
}

/// Canonical envelope `p0_{variant, alpha}` with threshold `m`.
#[no_mangle]
pub extern "C" fn bmvd_envelope(
    params: *const BmvdParams,
    variant: u8,
    alpha: f64,
    m: f64,
    t: f64,
    x: BmvdPoint,
    y: BmvdPoint,
    out: *mut f64,
) -> BmvdStatus {
    if params.is_null() || out.is_null() {
        return BmvdStatus::NullPointer;
    }
    if variant > 5 || !(alpha > 0.0) || !(m > 0.0) || !(t > 0.0) {
        set_error("need variant <= 5, alpha > 0, m > 0, t > 0");
        return BmvdStatus::InvalidArgument;
    }
    let p = &unsafe { &*params }.params;
    match (to_point(&x, p), to_point(&y, p)) {
        (Ok(a), Ok(b)) => {
            let v = EnvelopeVariant::new(variant, alpha).with_m(m);
            unsafe { *out = envelope(&v, t, &a, &b, p) };
            BmvdStatus::Ok
        }
        (Err(e), _) | (_, Err(e)) => {
            set_error(e);
            BmvdStatus::InvalidArgument
        }
    }
}

/// Solves the driftless kernel from the signed radial coordinate `x0` on a
/// free-space grid and returns a table handle.
#[no_mangle]
pub extern "C" fn bmvd_pde_solve(
    params: *const BmvdParams,
    l_leg: f64,
    l_plane: f64,
    h: f64,
    x0: f64,
    times: *const f64,
    n_times: usize,
    out: *mut *mut BmvdKernelTable,
) -> BmvdStatus {
    if params.is_null() || times.is_null() || out.is_null() {
        return BmvdStatus::NullPointer;
    }
    if n_times == 0 {
        set_error("need at least one output time");
        return BmvdStatus::InvalidArgument;
    }
    let p = unsafe { &*params }.params;
    let times = unsafe { std::slice::from_raw_parts(times, n_times) };
    let grid = match free_space_grid(p, l_leg, l_plane, h) {
        Ok(g) => g,
        Err(e) => {
            set_error(e.to_string());
            return BmvdStatus::InvalidArgument;
        }
    };
    match solve_kernel(&grid, x0, times, None, &SolveOptions::default()) {
        Ok(table) => {
            let handle = Box::new(BmvdKernelTable { table, params: p });
            unsafe { *out = Box::into_raw(handle) };
            BmvdStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            BmvdStatus::SolverError
        }
    }
}

/// Density with respect to the reference measure at a point, at one of the
/// table's output times.
#[no_mangle]
pub extern "C" fn bmvd_table_value(
    table: *const BmvdKernelTable,
    t: f64,
    y: BmvdPoint,
    out: *mut f64,
) -> BmvdStatus {
    if table.is_null() || out.is_null() {
        return BmvdStatus::NullPointer;
    }
    let h = unsafe { &*table };
    let point = match to_point(&y, &h.params) {
        Ok(p) => p,
        Err(e) => {
            set_error(e);
            return BmvdStatus::InvalidArgument;
        }
    };
    match h.table.kernel_to_e(t, &point, &h.params) {
        Ok(v) => {
            unsafe { *out = v };
            BmvdStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            BmvdStatus::SolverError
        }
    }
}

/// Total mass at one of the table's output times.
#[no_mangle]
pub extern "C" fn bmvd_table_mass(
    table: *const BmvdKernelTable,
    t: f64,
    out: *mut f64,
) -> BmvdStatus {
    if table.is_null() || out.is_null() {
        return BmvdStatus::NullPointer;
    }
    match unsafe { &*table }.table.mass(t) {
        Ok(v) => {
            unsafe { *out = v };
            BmvdStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            BmvdStatus::SolverError
        }
    }
}

/// Weighted one-sided derivative mismatch at the darning point.
#[no_mangle]
pub extern "C" fn bmvd_table_flux_at_star(
    table: *const BmvdKernelTable,
    t: f64,
    out: *mut f64,
) -> BmvdStatus {
    if table.is_null() || out.is_null() {
        return BmvdStatus::NullPointer;
    }
    match unsafe { &*table }.table.flux_at_star(t) {
        Ok(v) => {
            unsafe { *out = v };
            BmvdStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            BmvdStatus::SolverError
        }
    }
}

/// Frees a kernel-table handle; null is allowed.
#[no_mangle]
pub extern "C" fn bmvd_table_free(table: *mut BmvdKernelTable) {
    if !table.is_null() {
        drop(unsafe { Box::from_raw(table) });
    }
}

/// Simulates the driftless signed radial process from `x0` and writes the
/// empirical density (with respect to the reference measure) and its
/// standard errors over the `n_edges - 1` bins given by `edges`.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub extern "C" fn bmvd_simulate_radial_density(
    params: *const BmvdParams,
    x0: f64,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    edges: *const f64,
    n_edges: usize,
    out_density: *mut f64,
    out_se: *mut f64,
) -> BmvdStatus {
    if params.is_null() || edges.is_null() || out_density.is_null() || out_se.is_null() {
        return BmvdStatus::NullPointer;
    }
    if n_edges < 2 {
        set_error("need at least two bin edges");
        return BmvdStatus::InvalidArgument;
    }
    let p = unsafe { &*params }.params;
    let edges = unsafe { std::slice::from_raw_parts(edges, n_edges) };
    let bins = match bmvd::bins::SignedBins::from_edges(edges.to_vec()) {
        Ok(b) => b,
        Err(e) => {
            set_error(e.to_string());
            return BmvdStatus::InvalidArgument;
        }
    };
    let config = SimConfig::new(dt, horizon, n_paths, seed);
    let ensemble = match simulate_radial(x0, &config, &p, &DriftSpec::zero()) {
        Ok(e) => e,
        Err(e) => {
            set_error(e.to_string());
            return BmvdStatus::SimulationError;
        }
    };
    match estimate_density(&ensemble, &bins, &p) {
        Ok(d) => {
            unsafe {
                std::ptr::copy_nonoverlapping(d.values.as_ptr(), out_density, d.values.len());
                std::ptr::copy_nonoverlapping(d.std_errors.as_ptr(), out_se, d.std_errors.len());
            }
            BmvdStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            BmvdStatus::SimulationError
        }
    }
}

/// Green column of the killed driftless process on the symmetric domain
/// `(0, leg_len) + annulus(eps, plane_radius)`, evaluated at the signed
/// coordinates `ys`.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub extern "C" fn bmvd_green_column(
    params: *const BmvdParams,
    leg_len: f64,
    plane_radius: f64,
    h: f64,
    t_max: f64,
    x0: BmvdPoint,
    ys: *const f64,
    n: usize,
    out: *mut f64,
) -> BmvdStatus {
    if params.is_null() || ys.is_null() || out.is_null() {
        return BmvdStatus::NullPointer;
    }
    let p = unsafe { &*params }.params;
    let domain = match DomainSpec::new(leg_len, plane_radius, true, &p) {
        Ok(d) => d,
        Err(e) => {
            set_error(e.to_string());
            return BmvdStatus::DomainError;
        }
    };
    let source = match to_point(&x0, &p) {
        Ok(pt) => pt,
        Err(e) => {
            set_error(e);
            return BmvdStatus::InvalidArgument;
        }
    };
    let column = match green_pde(&domain, &source, None, &p, h, t_max, &SolveOptions::default()) {
        Ok(c) => c,
        Err(e) => {
            set_error(e.to_string());
            return BmvdStatus::SolverError;
        }
    };
    let ys = unsafe { std::slice::from_raw_parts(ys, n) };
    for (i, &y) in ys.iter().enumerate() {
        match column.value_at(y) {
            Some(v) => unsafe { *out.add(i) = v },
            None => {
                set_error(format!("query {y} outside the domain"));
                return BmvdStatus::DomainError;
            }
        }
    }
    BmvdStatus::Ok
}
