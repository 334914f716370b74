//! C ABI over `fpratio`.
//!
//! Every function returns an [`FprStatus`]; on failure the message is
//! kept per thread and can be read with [`fpr_last_error_message`].
//! Fields are opaque handles released with [`fpr_field_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fpratio::oracle::ou_exact_ratio;
use fpratio::ratio::ou_ratio_coefficients;
use fpratio::sampler::{ou_pipeline, uniform_times, BoundSpec, OuSetup, RatioMode, DEFAULT_MAX_ATTEMPTS};
use fpratio::solver1d::{solve_ratio_1d, Grid1D, RatioField};
use fpratio::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FprStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    SolverFailure = 4,
    SamplingFailure = 5,
    Panic = 6,
    Other = 7,
}

/// Solved ratio field.
pub struct FprField {
    inner: RatioField,
}

/// One sampled path, written into caller buffers of length `points`.
#[repr(C)]
pub struct FprPathBuffers {
    pub times: *mut f64,
    pub proposal: *mut f64,
    pub ratio: *mut f64,
    /// 1 where the point was accepted.
    pub accepted: *mut u8,
    /// Bridge-infilled values; NaN after the last acceptance.
    pub output: *mut f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FprStatus {
    match e {
        Error::InvalidParameter { .. }
        | Error::InvalidInput(_)
        | Error::InvalidTime { .. }
        | Error::Config { .. }
        | Error::MissingKey(_)
        | Error::UnknownProcess(_) => FprStatus::InvalidArgument,
        Error::Domain { .. } | Error::SingularTime { .. } | Error::BoundaryEvaluation(_) => FprStatus::Domain,
        Error::SolverBreakdown { .. } | Error::StepFailed { .. } | Error::Assembly { .. } => FprStatus::SolverFailure,
        Error::SamplingFailure { .. } | Error::WholePathRejected => FprStatus::SamplingFailure,
        _ => FprStatus::Other,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Error>) -> FprStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FprStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("panic inside fpratio".into());
            FprStatus::Panic
        }
    }
}

fn null(what: &str) -> Error {
    Error::InvalidInput(format!("{what} is null"))
}

/// Copies the last error of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length, 0 when there is
/// no error.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn fpr_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Closed-form O-U ratio at `(x, t)`, time measured from the start.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fpr_ou_exact_ratio(beta: f64, sigma: f64, x0: f64, x: f64, t: f64, out: *mut f64) -> FprStatus {
    let status = guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ou_exact_ratio(beta, sigma, x0, x, t)?;
        Ok(())
    });
    if out.is_null() && status != FprStatus::Ok {
        return FprStatus::NullPointer;
    }
    status
}

/// Solves the O-U ratio equation on `[x_min, x_max] × [0, t_end]` with
/// `m` spatial and `n` time steps; the field is returned through `out`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fpr_solve_ou_ratio(
    beta: f64,
    sigma: f64,
    x0: f64,
    x_min: f64,
    x_max: f64,
    m: usize,
    t_end: f64,
    n: usize,
    out: *mut *mut FprField,
) -> FprStatus {
    if out.is_null() {
        set_error("out is null".into());
        return FprStatus::NullPointer;
    }
    *out = ptr::null_mut();
    guard(|| {
        let grid = Grid1D::new(x_min, x_max, m, 0.0, t_end, n)?;
        let field = solve_ratio_1d(&ou_ratio_coefficients(beta, sigma, 0.0, x0)?, &grid, 1.0)?;
        *out = Box::into_raw(Box::new(FprField { inner: field }));
        Ok(())
    })
}

/// Bilinear evaluation of a field.
///
/// # Safety
/// `field` must come from this library and not be freed; `out` must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn fpr_field_eval(field: *const FprField, x: f64, t: f64, out: *mut f64) -> FprStatus {
    if field.is_null() || out.is_null() {
        set_error("field or out is null".into());
        return FprStatus::NullPointer;
    }
    guard(|| {
        *out = (*field).inner.eval(x, t)?;
        Ok(())
    })
}

/// Largest value of a field.
///
/// # Safety
/// As for [`fpr_field_eval`].
#[no_mangle]
pub unsafe extern "C" fn fpr_field_max(field: *const FprField, out: *mut f64) -> FprStatus {
    if field.is_null() || out.is_null() {
        set_error("field or out is null".into());
        return FprStatus::NullPointer;
    }
    guard(|| {
        *out = (*field).inner.max_value();
        Ok(())
    })
}

/// Releases a field. Null is ignored.
///
/// # Safety
/// `field` must come from this library and be freed at most once.
#[no_mangle]
pub unsafe extern "C" fn fpr_field_free(field: *mut FprField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Samples O-U path `index` of `seed` at `points` even times on
/// `(0, t_end]`, using the closed-form ratio and the analytic bound.
///
/// # Safety
/// Every buffer must be valid for `points` elements.
#[no_mangle]
pub unsafe extern "C" fn fpr_sample_ou_path(
    beta: f64,
    sigma: f64,
    x0: f64,
    t_end: f64,
    points: usize,
    seed: u64,
    index: u64,
    bufs: FprPathBuffers,
) -> FprStatus {
    if bufs.times.is_null() || bufs.proposal.is_null() || bufs.ratio.is_null() || bufs.accepted.is_null() || bufs.output.is_null() {
        set_error("a path buffer is null".into());
        return FprStatus::NullPointer;
    }
    guard(|| {
        if points == 0 || !(t_end > 0.0) {
            return Err(Error::InvalidInput("need points >= 1 and t_end > 0".into()));
        }
        let p = ou_pipeline(&OuSetup {
            beta,
            sigma,
            x0,
            t0: 0.0,
            times: uniform_times(0.0, t_end, points),
            mode: RatioMode::Exact,
            bound: BoundSpec::Analytic { x_max: None },
            seed,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            force_identity: false,
        })?;
        let s = p.sample_path(index)?;
        for i in 0..points {
            *bufs.times.add(i) = s.times[i];
            *bufs.proposal.add(i) = s.proposal[0][i];
            *bufs.ratio.add(i) = s.ratio[i];
            *bufs.accepted.add(i) = s.decisions[i].is_accepted() as u8;
            *bufs.output.add(i) = s.output[0][i];
        }
        Ok(())
    })
}
