//! C ABI for `genbound`.
//!
//! Every fallible function returns a [`GbStatus`]; on failure a message is
//! available from [`gb_last_error`] on the calling thread. Objects are opaque
//! handles released with their `*_free` function, and strings returned by the
//! library are released with [`gb_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use genbound::bounds::{self, BoundReport};
use genbound::cli::{parse_config, run, Overrides};
use genbound::info::{self, Pmf};
use genbound::matrix::Matrix;
use genbound::rd::{self, Distortion};
use genbound::report::to_canonical_json;
use genbound::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidDistribution = 3,
    ShapeMismatch = 4,
    Infeasible = 5,
    NegativeRadicand = 6,
    EnumerationCap = 7,
    Config = 8,
    Io = 9,
    Internal = 10,
    ValidationFailed = 11,
}

impl From<&Error> for GbStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidDistribution(_) => GbStatus::InvalidDistribution,
            Error::AlphabetMismatch { .. } | Error::ShapeMismatch(_) => GbStatus::ShapeMismatch,
            Error::IndexOutOfRange { .. }
            | Error::InvalidParameter { .. }
            | Error::Empty(_)
            | Error::TrajectoryOverflow { .. } => GbStatus::InvalidArgument,
            Error::Infeasible { .. } | Error::DistortionViolated { .. } => GbStatus::Infeasible,
            Error::NegativeRadicand { .. } => GbStatus::NegativeRadicand,
            Error::EnumerationCap { .. } => GbStatus::EnumerationCap,
            Error::Config { .. } => GbStatus::Config,
            Error::Io(_) => GbStatus::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(text).expect("no interior nul")));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (GbStatus, String)>) -> GbStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GbStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GbStatus::Internal
        }
    }
}

fn lib<T>(r: genbound::Result<T>) -> Result<T, (GbStatus, String)> {
    r.map_err(|e| (GbStatus::from(&e), e.to_string()))
}

fn null(name: &str) -> (GbStatus, String) {
    (GbStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], (GbStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, (GbStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (GbStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, (GbStatus, String)> {
    p.as_mut().ok_or_else(|| null(name))
}

fn into_c_string(s: String) -> Result<*mut c_char, (GbStatus, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (GbStatus::Internal, "string contains a nul byte".into()))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next library call on the same thread.
#[no_mangle]
pub extern "C" fn gb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gb_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => panic!("version"),
    };
    VERSION.as_ptr()
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opaque probability vector.
pub struct GbPmf(Pmf);

/// Opaque bound report.
pub struct GbBoundReport(BoundReport);

/// Creates a pmf from `len` probabilities (must sum to 1 within 1e-9).
///
/// # Safety
/// `probs` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_pmf_new(probs: *const f64, len: usize, out_pmf: *mut *mut GbPmf) -> GbStatus {
    guard(|| {
        let dst = out(out_pmf, "out")?;
        let p = lib(Pmf::new(slice(probs, len, "probs")?.to_vec()))?;
        *dst = Box::into_raw(Box::new(GbPmf(p)));
        Ok(())
    })
}

/// # Safety
/// `pmf` must come from [`gb_pmf_new`] and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gb_pmf_free(pmf: *mut GbPmf) {
    if !pmf.is_null() {
        drop(Box::from_raw(pmf));
    }
}

/// # Safety
/// `pmf` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gb_pmf_len(pmf: *const GbPmf) -> usize {
    pmf.as_ref().map_or(0, |p| p.0.len())
}

/// Shannon entropy in nats.
///
/// # Safety
/// `pmf` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_entropy(pmf: *const GbPmf, out_value: *mut f64) -> GbStatus {
    guard(|| {
        let p = pmf.as_ref().ok_or_else(|| null("pmf"))?;
        *out(out_value, "out")? = p.0.entropy();
        Ok(())
    })
}

/// `KL(p || q)` in nats; may be `+inf`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_kl_divergence(p: *const GbPmf, q: *const GbPmf, out_value: *mut f64) -> GbStatus {
    guard(|| {
        let (p, q) = (p.as_ref().ok_or_else(|| null("p"))?, q.as_ref().ok_or_else(|| null("q"))?);
        *out(out_value, "out")? = lib(info::kl_divergence(&p.0, &q.0))?;
        Ok(())
    })
}

/// Rényi divergence of order `alpha` in nats.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_renyi_divergence(
    p: *const GbPmf,
    q: *const GbPmf,
    alpha: f64,
    out_value: *mut f64,
) -> GbStatus {
    guard(|| {
        let (p, q) = (p.as_ref().ok_or_else(|| null("p"))?, q.as_ref().ok_or_else(|| null("q"))?);
        *out(out_value, "out")? = lib(info::renyi_divergence(&p.0, &q.0, alpha))?;
        Ok(())
    })
}

/// Largest `p` with `kl(p || a) <= b`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_binary_kl_inverse(a: f64, b: f64, out_value: *mut f64) -> GbStatus {
    guard(|| {
        if !(0.0..=1.0).contains(&a) || b.is_nan() || b < 0.0 {
            return Err((GbStatus::InvalidArgument, format!("need a in [0, 1] and b >= 0, got {a}, {b}")));
        }
        *out(out_value, "out")? = info::binary_kl_inverse(a, b);
        Ok(())
    })
}

/// `R(epsilon)` in nats for a source and a row-major `rows x cols`
/// distortion matrix (`rows` equal to the source size).
///
/// # Safety
/// `source` must be live, `distortion` must point to `rows * cols` doubles and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_rate_distortion(
    source: *const GbPmf,
    distortion: *const f64,
    rows: usize,
    cols: usize,
    epsilon: f64,
    out_rate: *mut f64,
) -> GbStatus {
    guard(|| {
        let src = source.as_ref().ok_or_else(|| null("source"))?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| (GbStatus::InvalidArgument, "matrix too large".to_string()))?;
        let flat = slice(distortion, n, "distortion")?.to_vec();
        let d = lib(Matrix::from_flat(rows, cols, flat).and_then(Distortion::new))?;
        *out(out_rate, "out")? = lib(rd::rd_curve(&src.0, &d, epsilon))?.rate_nats;
        Ok(())
    })
}

fn report_out(
    dst: *mut *mut GbBoundReport,
    make: impl FnOnce() -> genbound::Result<BoundReport>,
) -> GbStatus {
    guard(|| {
        // SAFETY: checked for null; the caller promises writability.
        let dst = unsafe { out(dst, "out")? };
        let r = lib(make())?;
        *dst = Box::into_raw(Box::new(GbBoundReport(r)));
        Ok(())
    })
}

/// Variable-size compressibility bound.
///
/// # Safety
/// `out` must be writable; the new report is owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn gb_variable_size_bound(
    rate: f64,
    sigma: f64,
    n: usize,
    delta: f64,
    epsilon: f64,
    out_report: *mut *mut GbBoundReport,
) -> GbStatus {
    report_out(out_report, || bounds::variable_size_bound(rate, sigma, n, delta, epsilon))
}

/// Fixed-size compressibility bound.
///
/// # Safety
/// `out` must be writable; the new report is owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn gb_fixed_size_bound(
    rate: f64,
    sigma: f64,
    n: usize,
    delta: f64,
    epsilon: f64,
    out_report: *mut *mut GbBoundReport,
) -> GbStatus {
    report_out(out_report, || bounds::fixed_size_bound(rate, sigma, n, delta, epsilon))
}

/// Fast-rate bound from the binary-KL inversion.
///
/// # Safety
/// `out` must be writable; the new report is owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn gb_fast_rate_bound(
    emp_risk: f64,
    sup_mi: f64,
    sigma: f64,
    n: usize,
    delta: f64,
    out_report: *mut *mut GbBoundReport,
) -> GbStatus {
    report_out(out_report, || bounds::fast_rate_bound(emp_risk, sup_mi, sigma, n, delta))
}

/// # Safety
/// `report` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_bound_report_value(report: *const GbBoundReport, out_value: *mut f64) -> GbStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        *out(out_value, "out")? = r.0.bound_value;
        Ok(())
    })
}

/// Canonical JSON of a report; free with [`gb_string_free`].
///
/// # Safety
/// `report` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_bound_report_json(report: *const GbBoundReport, out_json: *mut *mut c_char) -> GbStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let dst = out(out_json, "out")?;
        *dst = into_c_string(lib(to_canonical_json(&r.0))?)?;
        Ok(())
    })
}

/// # Safety
/// `report` must come from this library and not have been freed. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn gb_bound_report_free(report: *mut GbBoundReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Runs a JSON run config (same format as the command-line `--config` file)
/// and returns the manifest JSON. A run whose validation fails returns
/// `ValidationFailed` and still sets `out`.
///
/// # Safety
/// `config_json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gb_run_config(config_json: *const c_char, out_manifest: *mut *mut c_char) -> GbStatus {
    let mut failed = false;
    let status = guard(|| {
        let cfg = lib(parse_config(Some(text(config_json, "config_json")?), &Overrides::default()))?;
        let dst = out(out_manifest, "out")?;
        let manifest = lib(run(&cfg))?;
        failed = manifest.exit_code() != 0;
        *dst = into_c_string(lib(to_canonical_json(&manifest))?)?;
        Ok(())
    });
    if status == GbStatus::Ok && failed {
        set_error("validation failed");
        return GbStatus::ValidationFailed;
    }
    status
}
