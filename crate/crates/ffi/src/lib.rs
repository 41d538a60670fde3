//! C interface to qcurv.
//!
//! Every function returns an `int32_t` status (`QC_OK` or one of the
//! `QC_ERR_*` codes) and writes results through out-pointers. Handles are
//! opaque and must be released with their `*_free` function. The message of
//! the last failure on the calling thread is available from
//! `qc_last_error`.

use qcurv::config::{ExperimentConfig, Setup};
use qcurv::degree::{leray_schauder_degree, Convention, CritEntry, DegreeInput};
use qcurv::reduced::{nd_predicates, CritConfig};
use qcurv::sphere::{normalize, Point};
use qcurv::QcError;
use rand::SeedableRng;
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

pub const QC_OK: i32 = 0;
/// A required pointer argument was null.
pub const QC_ERR_NULL: i32 = 1;
/// Input failed validation (range, dimension, separation, convention).
pub const QC_ERR_INVALID: i32 = 2;
/// A numerical procedure failed (no convergence, resolution, overflow).
pub const QC_ERR_NUMERICAL: i32 = 3;
/// Configuration JSON was malformed or not UTF-8.
pub const QC_ERR_CONFIG: i32 = 4;
/// An index was out of range or a caller buffer was too small.
pub const QC_ERR_RANGE: i32 = 5;
/// A Rust panic was caught at the boundary.
pub const QC_ERR_PANIC: i32 = 6;

/// |L_K| below this counts as degenerate in the nondegeneracy check.
const ND_THRESHOLD: f64 = 1e-8;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

enum Fail {
    Null(&'static str),
    Range(String),
    Qc(QcError),
}

impl From<QcError> for Fail {
    fn from(e: QcError) -> Self {
        Fail::Qc(e)
    }
}

fn code(e: &QcError) -> i32 {
    match e {
        QcError::Config(_) => QC_ERR_CONFIG,
        e if e.exit_code() == 2 => QC_ERR_INVALID,
        _ => QC_ERR_NUMERICAL,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> i32 {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => (QC_OK, String::new()),
        Ok(Err(Fail::Null(what))) => (QC_ERR_NULL, format!("{what} is null")),
        Ok(Err(Fail::Range(m))) => (QC_ERR_RANGE, m),
        Ok(Err(Fail::Qc(e))) => (code(&e), e.to_string()),
        Err(p) => {
            let m = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned());
            (QC_ERR_PANIC, format!("panic: {}", m.unwrap_or_default()))
        }
    };
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
    status
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Model, K and reduced functional built from a JSON configuration.
pub struct QcProblem {
    setup: Setup,
    chi_m: i64,
    seeds_per_factor: usize,
}

/// Critical points of the reduced functional.
pub struct QcCritList {
    configs: Vec<CritConfig>,
    failed_seeds: usize,
}

/// Scalar data of one critical configuration.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct QcCritInfo {
    /// Number of points in the configuration.
    pub npoints: usize,
    pub f: f64,
    pub gradnorm: f64,
    pub morse: u32,
    pub l_big: f64,
    pub l_small: f64,
    pub i_inf: i64,
    pub in_f_inf: bool,
    pub degenerate: bool,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns the full length
/// including the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn qc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let k = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), k);
            *buf.add(k) = 0;
        }
        bytes.len() + 1
    })
}

/// Leray–Schauder degree from the Morse data at infinity. `i_inf` holds
/// `len` entries; `ordered` selects the convention where the list holds
/// every ordering of every configuration.
///
/// # Safety
/// `i_inf` must be valid for `len` reads; `out_d_m` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_degree(m: u32, mbar: u32, chi_m: i64, n: u32, i_inf: *const i64, len: usize, ordered: bool, out_d_m: *mut i64) -> i32 {
    guard(|| {
        let out_d_m = out(out_d_m, "out_d_m")?;
        let crit = slice(i_inf, len, "i_inf")?.iter().map(|&i_inf| CritEntry { i_inf }).collect();
        let convention = if ordered { Convention::Ordered } else { Convention::Unordered };
        let input = DegreeInput { m, mbar, chi_m, n, crit, convention };
        *out_d_m = leray_schauder_degree(&input)?.d_m;
        Ok(())
    })
}

/// Builds a problem from a JSON configuration; null means all defaults.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out_problem`
/// must be writable. On success the caller owns `*out_problem`.
#[no_mangle]
pub unsafe extern "C" fn qc_problem_new(config_json: *const c_char, out_problem: *mut *mut QcProblem) -> i32 {
    guard(|| {
        let slot = out(out_problem, "out_problem")?;
        *slot = std::ptr::null_mut();
        let cfg = if config_json.is_null() {
            ExperimentConfig::default()
        } else {
            let text = CStr::from_ptr(config_json).to_str().map_err(|e| QcError::Config(e.to_string()))?;
            ExperimentConfig::from_json(text)?
        };
        let setup = cfg.setup()?;
        let chi_m = setup.model.euler_char.round() as i64;
        *slot = Box::into_raw(Box::new(QcProblem { setup, chi_m, seeds_per_factor: cfg.seeds_per_factor }));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from `qc_problem_new`, freed once.
#[no_mangle]
pub unsafe extern "C" fn qc_problem_free(p: *mut QcProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Dimension `n` and resonance integer `m`. Points are passed as `n + 1`
/// ambient coordinates; a configuration holds `m` of them.
///
/// # Safety
/// `p` must be a live handle; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_problem_dims(p: *const QcProblem, out_n: *mut u32, out_m: *mut u32) -> i32 {
    guard(|| {
        let p = p.as_ref().ok_or(Fail::Null("problem"))?;
        *out(out_n, "out_n")? = p.setup.model.n as u32;
        *out(out_m, "out_m")? = p.setup.reduced.m as u32;
        Ok(())
    })
}

unsafe fn points(p: &QcProblem, coords: *const f64, npoints: usize) -> Result<Vec<Point>, Fail> {
    let d = p.setup.model.n + 1;
    let xs = slice(coords, npoints * d, "coords")?;
    Ok(xs.chunks(d).map(|c| normalize(nalgebra::DVector::from_column_slice(c))).collect())
}

/// Reduced functional at a configuration of `npoints` points
/// (`npoints * (n + 1)` coordinates, normalized to the sphere).
///
/// # Safety
/// `coords` must be valid for `npoints * (n + 1)` reads.
#[no_mangle]
pub unsafe extern "C" fn qc_problem_reduced_value(p: *const QcProblem, coords: *const f64, npoints: usize, out_f: *mut f64) -> i32 {
    guard(|| {
        let p = p.as_ref().ok_or(Fail::Null("problem"))?;
        let a = points(p, coords, npoints)?;
        *out(out_f, "out_f")? = p.setup.reduced.f_reduced(&a)?;
        Ok(())
    })
}

/// Tangential gradient of the reduced functional, written as
/// `npoints * (n + 1)` ambient coordinates.
///
/// # Safety
/// `coords` and `out_grad` must be valid for `npoints * (n + 1)` elements.
#[no_mangle]
pub unsafe extern "C" fn qc_problem_reduced_gradient(p: *const QcProblem, coords: *const f64, npoints: usize, out_grad: *mut f64) -> i32 {
    guard(|| {
        let p = p.as_ref().ok_or(Fail::Null("problem"))?;
        let a = points(p, coords, npoints)?;
        if out_grad.is_null() {
            return Err(Fail::Null("out_grad"));
        }
        let g = p.setup.reduced.grad_f_reduced(&a)?;
        let d = p.setup.model.n + 1;
        let dst = std::slice::from_raw_parts_mut(out_grad, npoints * d);
        for (chunk, gi) in dst.chunks_mut(d).zip(&g) {
            chunk.copy_from_slice(gi.as_slice());
        }
        Ok(())
    })
}

/// Searches for critical points from the default seeds drawn with `seed`.
///
/// # Safety
/// `p` must be a live handle; `out_list` must be writable. On success the
/// caller owns `*out_list`.
#[no_mangle]
pub unsafe extern "C" fn qc_problem_critical_points(p: *const QcProblem, seed: u64, out_list: *mut *mut QcCritList) -> i32 {
    guard(|| {
        let p = p.as_ref().ok_or(Fail::Null("problem"))?;
        let slot = out(out_list, "out_list")?;
        *slot = std::ptr::null_mut();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let seeds = p.setup.reduced.default_seeds(p.seeds_per_factor, &mut rng);
        let found = p.setup.reduced.find_critical_points(&seeds);
        *slot = Box::into_raw(Box::new(QcCritList { configs: found.configs, failed_seeds: found.failures.len() }));
        Ok(())
    })
}

/// # Safety
/// `l` must be null or a handle from `qc_problem_critical_points`, freed once.
#[no_mangle]
pub unsafe extern "C" fn qc_critlist_free(l: *mut QcCritList) {
    if !l.is_null() {
        drop(Box::from_raw(l));
    }
}

/// Number of critical configurations and of seeds that did not converge.
///
/// # Safety
/// `l` must be a live handle; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_critlist_len(l: *const QcCritList, out_len: *mut usize, out_failed_seeds: *mut usize) -> i32 {
    guard(|| {
        let l = l.as_ref().ok_or(Fail::Null("list"))?;
        *out(out_len, "out_len")? = l.configs.len();
        *out(out_failed_seeds, "out_failed_seeds")? = l.failed_seeds;
        Ok(())
    })
}

fn entry(l: &QcCritList, idx: usize) -> Result<&CritConfig, Fail> {
    l.configs.get(idx).ok_or_else(|| Fail::Range(format!("index {idx} out of range for {} configurations", l.configs.len())))
}

/// # Safety
/// `l` must be a live handle; `out_info` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_critlist_get(l: *const QcCritList, idx: usize, out_info: *mut QcCritInfo) -> i32 {
    guard(|| {
        let l = l.as_ref().ok_or(Fail::Null("list"))?;
        let c = entry(l, idx)?;
        *out(out_info, "out_info")? = QcCritInfo {
            npoints: c.points.len(),
            f: c.f,
            gradnorm: c.gradnorm,
            morse: c.morse as u32,
            l_big: c.big_l,
            l_small: c.small_l,
            i_inf: c.i_inf,
            in_f_inf: c.in_f_inf,
            degenerate: c.degenerate,
        };
        Ok(())
    })
}

/// Copies the points of configuration `idx` into `buf` (`len` doubles);
/// `*out_needed` receives the required length even when `buf` is too small.
///
/// # Safety
/// `buf` must be null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn qc_critlist_points(l: *const QcCritList, idx: usize, buf: *mut f64, len: usize, out_needed: *mut usize) -> i32 {
    guard(|| {
        let l = l.as_ref().ok_or(Fail::Null("list"))?;
        let c = entry(l, idx)?;
        let flat: Vec<f64> = c.points.iter().flatten().copied().collect();
        *out(out_needed, "out_needed")? = flat.len();
        if len < flat.len() {
            return Err(Fail::Range(format!("buffer holds {len} doubles, {} needed", flat.len())));
        }
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        std::ptr::copy_nonoverlapping(flat.as_ptr(), buf, flat.len());
        Ok(())
    })
}

/// Degree of the problem from a critical list: the list must satisfy the
/// nondegeneracy predicates, and its members of F_∞ enter the sum.
///
/// # Safety
/// `p` and `l` must be live handles; `out_d_m` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qc_problem_degree(p: *const QcProblem, l: *const QcCritList, out_d_m: *mut i64) -> i32 {
    guard(|| {
        let p = p.as_ref().ok_or(Fail::Null("problem"))?;
        let l = l.as_ref().ok_or(Fail::Null("list"))?;
        let out_d_m = out(out_d_m, "out_d_m")?;
        let nd = nd_predicates(&l.configs, ND_THRESHOLD);
        if !nd.nd {
            return Err(QcError::Invalid(format!("critical set is degenerate: {nd:?}")).into());
        }
        let m = p.setup.reduced.m;
        let crit = l.configs.iter().filter(|c| c.in_f_inf && c.points.len() == m).map(|c| CritEntry { i_inf: c.i_inf }).collect();
        let input = DegreeInput {
            m: m as u32,
            mbar: p.setup.model.mbar() as u32,
            chi_m: p.chi_m,
            n: p.setup.model.n as u32,
            crit,
            convention: Convention::Unordered,
        };
        *out_d_m = leray_schauder_degree(&input)?.d_m;
        Ok(())
    })
}
