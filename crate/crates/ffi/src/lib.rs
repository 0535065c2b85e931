//! C ABI over `diagtomo`.
//!
//! Every fallible call returns a [`DtStatus`]; on failure the message is
//! available from [`dt_last_error_message`] on the same thread. Handles are
//! opaque and owned by the caller until passed to their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use diagtomo::charfunc::{chi_thermal_squeezed_exact, SqueezeSpec};
use diagtomo::diagrams::{eval_model, CoefficientVector};
use diagtomo::estimator::{build_grid, minimize, CostKind, EstimationReport, FitProblem, ModelSpec, Observation};
use diagtomo::sampler::{born_probabilities, generate_dataset, read_dataset, write_dataset, ChiSource, ShotPolicy, ShotRecord};
use diagtomo::{Complex64, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidInput = 3,
    Io = 4,
    NotConverged = 5,
    RankDeficient = 6,
    Numerical = 7,
    Panic = 8,
}

/// Shot records.
pub struct DtDataset {
    records: Vec<ShotRecord>,
}

/// Fit result.
pub struct DtReport {
    report: EstimationReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> DtStatus {
    match err {
        Error::Io { .. } | Error::Csv { .. } => DtStatus::Io,
        Error::NotConverged { .. } => DtStatus::NotConverged,
        Error::RankDeficient { .. } => DtStatus::RankDeficient,
        Error::TraceDrift { .. } | Error::InvalidStep { .. } => DtStatus::Numerical,
        Error::InvalidInput(_) => DtStatus::InvalidInput,
        _ => DtStatus::InvalidArgument,
    }
}

/// Runs `f`, recording errors and converting panics.
fn guard(f: impl FnOnce() -> Result<(), (DtStatus, String)>) -> DtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DtStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            DtStatus::Panic
        }
    }
}

fn lib<T>(r: diagtomo::Result<T>) -> Result<T, (DtStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (DtStatus, String) {
    (DtStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, (DtStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| (DtStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

fn cost_kind(cost: u32) -> Result<CostKind, (DtStatus, String)> {
    match cost {
        0 => Ok(CostKind::Ml),
        1 => Ok(CostKind::Ls),
        c => Err((DtStatus::InvalidArgument, format!("cost must be 0 (ML) or 1 (LS), got {c}"))),
    }
}

/// Last error message on this thread, or NULL. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn dt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Closed-form χ of the n = 2 squeezed thermal state.
///
/// # Safety
/// `out_re` and `out_im` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dt_chi_squeezed_exact(
    r: f64,
    theta: f64,
    n_b: f64,
    xi_re: f64,
    xi_im: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> DtStatus {
    guard(|| {
        if out_re.is_null() || out_im.is_null() {
            return Err(null("output"));
        }
        let spec = lib(SqueezeSpec::new(2, r, theta))?;
        let chi = lib(chi_thermal_squeezed_exact(Complex64::new(xi_re, xi_im), &spec, n_b))?;
        *out_re = chi.re;
        *out_im = chi.im;
        Ok(())
    })
}

/// Clipped truncated model at one point; `len` coefficients given as
/// separate real and imaginary arrays (`coeff_im` may be NULL for real ones).
///
/// # Safety
/// `coeff_re` (and `coeff_im` when non-NULL) must hold `len` values; outputs
/// must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dt_eval_model(
    order: usize,
    coeff_re: *const f64,
    coeff_im: *const f64,
    len: usize,
    xi_re: f64,
    xi_im: f64,
    r: f64,
    theta: f64,
    n_b: f64,
    c_h: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> DtStatus {
    guard(|| {
        if coeff_re.is_null() || out_re.is_null() || out_im.is_null() {
            return Err(null("coefficient or output pointer"));
        }
        let re = std::slice::from_raw_parts(coeff_re, len);
        let values = (0..len)
            .map(|j| {
                let im = if coeff_im.is_null() { 0.0 } else { *coeff_im.add(j) };
                Complex64::new(re[j], im)
            })
            .collect();
        let theta_v = lib(CoefficientVector::new(order, values, Some(n_b)))?;
        let chi = eval_model(&theta_v, Complex64::new(xi_re, xi_im), r, theta, n_b, c_h);
        *out_re = chi.re;
        *out_im = chi.im;
        Ok(())
    })
}

/// `P(+1)` in the x and y bases for a given χ.
///
/// # Safety
/// `p_x` and `p_y` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dt_born_probabilities(chi_re: f64, chi_im: f64, p_x: *mut f64, p_y: *mut f64) -> DtStatus {
    guard(|| {
        if p_x.is_null() || p_y.is_null() {
            return Err(null("output"));
        }
        let (x, y) = lib(born_probabilities(Complex64::new(chi_re, chi_im)))?;
        *p_x = x;
        *p_y = y;
        Ok(())
    })
}

/// Samples a dataset from the exact χ on the real-ξ lattice with equal shot
/// allocation.
///
/// # Safety
/// `out` must be valid for writes; the handle is released with [`dt_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn dt_dataset_generate(
    order: usize,
    xi_max: f64,
    r_max: f64,
    d_xi: f64,
    d_r: f64,
    n_b: f64,
    total_shots: u64,
    seed: u64,
    out: *mut *mut DtDataset,
) -> DtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let grid = lib(build_grid(xi_max, r_max, d_xi, d_r, n_b))?;
        let records = lib(generate_dataset(&grid, &ShotPolicy::equal(total_shots), &ChiSource::analytic(order), seed))?;
        *out = Box::into_raw(Box::new(DtDataset { records }));
        Ok(())
    })
}

/// Reads a dataset CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dt_dataset_load(path: *const c_char, out: *mut *mut DtDataset) -> DtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let records = lib(read_dataset(&path_arg(path)?))?;
        *out = Box::into_raw(Box::new(DtDataset { records }));
        Ok(())
    })
}

/// Writes a dataset CSV atomically.
///
/// # Safety
/// `ds` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dt_dataset_write(ds: *const DtDataset, path: *const c_char) -> DtStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        lib(write_dataset(&path_arg(path)?, &ds.records))
    })
}

/// Number of records, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dt_dataset_len(ds: *const DtDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.records.len())
}

/// # Safety
/// `ds` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dt_dataset_free(ds: *mut DtDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Fits the model to a dataset; `cost` is 0 for ML and 1 for weighted LS.
/// When the optimizer does not converge the best iterate is still returned
/// through `out` together with `DT_STATUS_NOT_CONVERGED`.
///
/// # Safety
/// `ds` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dt_estimate(
    ds: *const DtDataset,
    order: usize,
    n_b: f64,
    heating: bool,
    cost: u32,
    out: *mut *mut DtReport,
) -> DtStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let spec = lib(ModelSpec::new(order, n_b, heating))?;
        let problem = FitProblem::new(spec, Observation::from_records(&ds.records), cost_kind(cost)?);
        match minimize(&problem) {
            Ok(report) => {
                *out = Box::into_raw(Box::new(DtReport { report }));
                Ok(())
            }
            Err(Error::NotConverged { best, iterations, gradient_norm }) => {
                *out = Box::into_raw(Box::new(DtReport { report: *best }));
                Err((
                    DtStatus::NotConverged,
                    format!("not converged after {iterations} iterations (gradient {gradient_norm:.3e})"),
                ))
            }
            Err(e) => Err((status_of(&e), e.to_string())),
        }
    })
}

/// Length of the flat parameter vector, or 0 for NULL.
///
/// # Safety
/// `rep` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dt_report_num_params(rep: *const DtReport) -> usize {
    rep.as_ref().map_or(0, |r| r.report.params.len())
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), (DtStatus, String)> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < src.len() {
        return Err((DtStatus::InvalidArgument, format!("buffer holds {len}, need {}", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Copies the flat parameters (re parts, then im parts for n = 3, then `c_h`).
///
/// # Safety
/// `rep` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dt_report_params(rep: *const DtReport, buf: *mut f64, len: usize) -> DtStatus {
    guard(|| {
        let rep = rep.as_ref().ok_or_else(|| null("report"))?;
        copy_out(&rep.report.params, buf, len)
    })
}

/// Copies `sqrt(diag I⁻¹)` over the flat parameters.
///
/// # Safety
/// `rep` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dt_report_std(rep: *const DtReport, buf: *mut f64, len: usize) -> DtStatus {
    guard(|| {
        let rep = rep.as_ref().ok_or_else(|| null("report"))?;
        copy_out(&rep.report.std(), buf, len)
    })
}

/// Writes the report CSV atomically.
///
/// # Safety
/// `rep` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dt_report_write(rep: *const DtReport, path: *const c_char) -> DtStatus {
    guard(|| {
        let rep = rep.as_ref().ok_or_else(|| null("report"))?;
        lib(rep.report.write_csv(&path_arg(path)?))
    })
}

/// # Safety
/// `rep` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dt_report_free(rep: *mut DtReport) {
    if !rep.is_null() {
        drop(Box::from_raw(rep));
    }
}
