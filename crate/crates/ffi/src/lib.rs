//! C ABI over cascade-core.
//!
//! Every function returns a status code (`CASCADE_OK` on success) and writes
//! results through out-pointers. Models and welfare solutions are opaque
//! handles released with their `_free` function. After a failure,
//! `cascade_last_error` copies a message for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cascade_core::welfare::{value_function_solve, WelfareValue};
use cascade_core::{
    cascade_bounds as core_bounds, estimate_absorption, BoundaryVariant, Error, ModelParams,
};

pub const CASCADE_OK: c_int = 0;
pub const CASCADE_ERR_NULL: c_int = 1;
pub const CASCADE_ERR_DOMAIN: c_int = 2;
pub const CASCADE_ERR_DEGENERATE: c_int = 3;
pub const CASCADE_ERR_NONCONVERGENCE: c_int = 4;
pub const CASCADE_ERR_CONFIG: c_int = 5;
pub const CASCADE_ERR_OTHER: c_int = 6;
pub const CASCADE_ERR_PANIC: c_int = 7;

pub const CASCADE_VARIANT_SINGLE_THRESHOLD: c_int = 0;
pub const CASCADE_VARIANT_VISIT_SYMMETRIC: c_int = 1;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn code_of(e: &Error) -> c_int {
    match e {
        Error::Domain(_) | Error::UndefinedUpdate(_) => CASCADE_ERR_DOMAIN,
        Error::DegenerateThreshold { .. } => CASCADE_ERR_DEGENERATE,
        Error::NonConvergence { .. } => CASCADE_ERR_NONCONVERGENCE,
        Error::Config(_) => CASCADE_ERR_CONFIG,
        _ => CASCADE_ERR_OTHER,
    }
}

fn guard<F: FnOnce() -> Result<(), c_int>>(f: F) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CASCADE_OK,
        Ok(Err(code)) => code,
        Err(_) => {
            set_error("internal panic".into());
            CASCADE_ERR_PANIC
        }
    }
}

fn fail(e: Error) -> c_int {
    let code = code_of(&e);
    set_error(e.to_string());
    code
}

fn null() -> c_int {
    set_error("null pointer argument".into());
    CASCADE_ERR_NULL
}

/// Model primitives, mirroring the fields of the Rust `ModelParams`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CascadeParams {
    pub q: f64,
    pub kappa: f64,
    pub lambda_rate: f64,
    pub delta_gap: f64,
    pub v_low: f64,
    pub first_visit_prob: f64,
    pub p_a: f64,
    pub p_b: f64,
    pub p_max: f64,
    pub review_mu: f64,
    pub review_r: f64,
    pub calvo_hazard: f64,
    pub eta0: f64,
}

impl From<&ModelParams> for CascadeParams {
    fn from(p: &ModelParams) -> Self {
        CascadeParams {
            q: p.q,
            kappa: p.kappa,
            lambda_rate: p.lambda_rate,
            delta_gap: p.delta_gap,
            v_low: p.v_low,
            first_visit_prob: p.first_visit_prob,
            p_a: p.p_a,
            p_b: p.p_b,
            p_max: p.p_max,
            review_mu: p.review_mu,
            review_r: p.review_r,
            calvo_hazard: p.calvo_hazard,
            eta0: p.eta0,
        }
    }
}

impl From<&CascadeParams> for ModelParams {
    fn from(c: &CascadeParams) -> Self {
        ModelParams {
            q: c.q,
            kappa: c.kappa,
            lambda_rate: c.lambda_rate,
            delta_gap: c.delta_gap,
            v_low: c.v_low,
            first_visit_prob: c.first_visit_prob,
            p_a: c.p_a,
            p_b: c.p_b,
            p_max: c.p_max,
            review_mu: c.review_mu,
            review_r: c.review_r,
            calvo_hazard: c.calvo_hazard,
            eta0: c.eta0,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CascadeBounds {
    pub eta_bar: f64,
    pub eta_under: f64,
    pub llr_bar: f64,
    pub llr_under: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CascadeAbsorption {
    pub p_wrong: f64,
    pub p_wrong_se: f64,
    pub p_up: f64,
    pub mean_arrivals: f64,
    pub mean_time: f64,
    pub welfare: f64,
    pub welfare_se: f64,
    pub n_runs: u64,
    pub n_censored: u64,
}

/// Opaque validated model.
pub struct CascadeModel {
    params: ModelParams,
}

/// Opaque continuation-welfare solution.
pub struct CascadeWelfare {
    value: WelfareValue,
}

/// Version string, static and NUL-terminated.
#[no_mangle]
pub extern "C" fn cascade_version() -> *const c_char {
    concat!("cascade ", env!("CARGO_PKG_VERSION"), "\0")
        .as_ptr()
        .cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn cascade_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Fills `out` with the baseline parameters.
///
/// # Safety
/// `out` must be a valid pointer or null.
#[no_mangle]
pub unsafe extern "C" fn cascade_params_default(out: *mut CascadeParams) -> c_int {
    if out.is_null() {
        return null();
    }
    *out = CascadeParams::from(&ModelParams::default());
    CASCADE_OK
}

/// Validates `params` and returns a model handle in `out`.
///
/// # Safety
/// `params` and `out` must be valid pointers or null.
#[no_mangle]
pub unsafe extern "C" fn cascade_model_new(
    params: *const CascadeParams,
    out: *mut *mut CascadeModel,
) -> c_int {
    if params.is_null() || out.is_null() {
        return null();
    }
    let p = ModelParams::from(&*params);
    guard(|| {
        p.validate().map_err(fail)?;
        *out = Box::into_raw(Box::new(CascadeModel { params: p }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `cascade_model_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cascade_model_free(model: *mut CascadeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Cascade bounds for `variant` (one of the CASCADE_VARIANT_* constants).
///
/// # Safety
/// `model` and `out` must be valid pointers or null.
#[no_mangle]
pub unsafe extern "C" fn cascade_model_bounds(
    model: *const CascadeModel,
    variant: c_int,
    out: *mut CascadeBounds,
) -> c_int {
    if model.is_null() || out.is_null() {
        return null();
    }
    let m = &*model;
    guard(|| {
        let v = match variant {
            CASCADE_VARIANT_SINGLE_THRESHOLD => BoundaryVariant::SingleThreshold,
            CASCADE_VARIANT_VISIT_SYMMETRIC => BoundaryVariant::VisitSymmetric,
            _ => return Err(fail(Error::Domain(format!("unknown variant {variant}")))),
        };
        let b = core_bounds(&m.params, v).map_err(fail)?;
        *out = CascadeBounds {
            eta_bar: b.eta_bar,
            eta_under: b.eta_under,
            llr_bar: b.llr_bar,
            llr_under: b.llr_under,
        };
        Ok(())
    })
}

/// Monte Carlo absorption statistics over `runs` runs.
///
/// # Safety
/// `model` and `out` must be valid pointers or null.
#[no_mangle]
pub unsafe extern "C" fn cascade_estimate_absorption(
    model: *const CascadeModel,
    runs: u64,
    seed: u64,
    out: *mut CascadeAbsorption,
) -> c_int {
    if model.is_null() || out.is_null() {
        return null();
    }
    let m = &*model;
    guard(|| {
        if runs == 0 {
            return Err(fail(Error::Domain("runs must be positive".into())));
        }
        let r = estimate_absorption(&m.params, runs as usize, seed).map_err(fail)?;
        *out = CascadeAbsorption {
            p_wrong: r.p_wrong.mean,
            p_wrong_se: r.p_wrong.std_error,
            p_up: r.p_up.mean,
            mean_arrivals: r.mean_arrivals.mean,
            mean_time: r.mean_time.mean,
            welfare: r.welfare.mean,
            welfare_se: r.welfare.std_error,
            n_runs: r.n_runs as u64,
            n_censored: r.n_censored as u64,
        };
        Ok(())
    })
}

/// Solves continuation welfare on a grid of `grid_points` beliefs.
///
/// # Safety
/// `model` and `out` must be valid pointers or null.
#[no_mangle]
pub unsafe extern "C" fn cascade_welfare_solve(
    model: *const CascadeModel,
    grid_points: u64,
    tol: f64,
    max_iters: u64,
    out: *mut *mut CascadeWelfare,
) -> c_int {
    if model.is_null() || out.is_null() {
        return null();
    }
    let m = &*model;
    guard(|| {
        let value = value_function_solve(&m.params, grid_points as usize, tol, max_iters as usize)
            .map_err(fail)?;
        *out = Box::into_raw(Box::new(CascadeWelfare { value }));
        Ok(())
    })
}

/// W at belief `eta`.
///
/// # Safety
/// `welfare` and `out` must be valid pointers or null.
#[no_mangle]
pub unsafe extern "C" fn cascade_welfare_at(
    welfare: *const CascadeWelfare,
    eta: f64,
    out: *mut f64,
) -> c_int {
    if welfare.is_null() || out.is_null() {
        return null();
    }
    let w = &*welfare;
    guard(|| {
        if !(0.0..=1.0).contains(&eta) {
            return Err(fail(Error::Domain(format!("eta = {eta} outside [0, 1]"))));
        }
        *out = w.value.at(eta);
        Ok(())
    })
}

/// # Safety
/// `welfare` must come from `cascade_welfare_solve` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cascade_welfare_free(welfare: *mut CascadeWelfare) {
    if !welfare.is_null() {
        drop(Box::from_raw(welfare));
    }
}
