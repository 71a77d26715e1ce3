//! C ABI over the lpbm toolkit.
//!
//! Objects cross the boundary as opaque handles released with their `_free`
//! function. Every call returns an `LpbmStatus`; on failure the message is
//! available from `lpbm_last_error` on the same thread. Strings returned
//! through `char **` are owned by the caller and released with
//! `lpbm_string_free`.

use lpbm::asplund::{p_sum, SumOptions};
use lpbm::funcgrid::{build_gaussian, build_indicator_box};
use lpbm::functionals::{entropy, total_mass, DiscreteMeasure, LpMeasureOptions};
use lpbm::inequalities::{check_prekopa_leindler, check_santalo, CheckConfig};
use lpbm::legendre::{conjugate_fast, default_dual_spec};
use lpbm::minkowski_solver::{forward_measure, solve, SolverConfig};
use lpbm::variation::{delta_j_numeric, VariationOptions, DEFAULT_SCHEDULE};
use lpbm::{ClassTag, Error, GridSpec, LogConcaveFn, MarginReport};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpbmStatus {
    Ok = 0,
    NullPointer = 1,
    Validation = 2,
    OracleMismatch = 3,
    MarginFailure = 4,
    Infeasible = 5,
    Numerical = 6,
    Parse = 7,
    Panic = 8,
}

/// Opaque log-concave function e^{-phi} on a grid.
pub struct LpbmFunction(LogConcaveFn);

/// Opaque discrete measure.
pub struct LpbmMeasure(DiscreteMeasure);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> LpbmStatus {
    match e {
        Error::Grid(_) | Error::Validation(_) | Error::Io(_) => LpbmStatus::Validation,
        Error::OracleMismatch(_) => LpbmStatus::OracleMismatch,
        Error::Infeasible(_) => LpbmStatus::Infeasible,
        Error::Numerical(_) => LpbmStatus::Numerical,
        Error::Parse(_) => LpbmStatus::Parse,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> LpbmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => LpbmStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            LpbmStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            LpbmStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn read_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::Parse(format!("{what} is not valid UTF-8"))))
}

fn give_string(s: String, out: &mut *mut c_char) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|_| Fail::Lib(Error::Parse("interior NUL in output".into())))?;
    *out = c.into_raw();
    Ok(())
}

fn give<T>(v: T, out: &mut *mut T) {
    *out = Box::into_raw(Box::new(v));
}

/// Message of the last failed call on this thread (empty if none). The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lpbm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lpbm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Reads a function from its JSON grid file.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpbm_function_from_json(json: *const c_char, out: *mut *mut LpbmFunction) -> LpbmStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let out = out_ptr(out, "out")?;
        give(LpbmFunction(LogConcaveFn::from_json(text)?), out);
        Ok(())
    })
}

/// Writes the JSON grid file of `f`.
///
/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpbm_function_to_json(f: *const LpbmFunction, out: *mut *mut c_char) -> LpbmStatus {
    guard(|| {
        let f = get(f, "f")?;
        let out = out_ptr(out, "out")?;
        give_string(f.0.to_json()?, out)
    })
}

/// Standard builder e^{-|x|^2/(2s)} on a symmetric grid of `n` nodes per axis.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpbm_function_gaussian(
    dim: usize,
    radius: f64,
    n: usize,
    s: f64,
    out: *mut *mut LpbmFunction,
) -> LpbmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let spec = GridSpec::symmetric(dim, radius, n)?;
        give(LpbmFunction(LogConcaveFn::new(build_gaussian(&spec, s)?, ClassTag::A0Prime)), out);
        Ok(())
    })
}

/// Indicator of the cube [-half_width, half_width]^dim.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpbm_function_box(
    dim: usize,
    radius: f64,
    n: usize,
    half_width: f64,
    out: *mut *mut LpbmFunction,
) -> LpbmStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let spec = GridSpec::symmetric(dim, radius, n)?;
        let phi = build_indicator_box(&spec, &vec![half_width; spec.dim])?;
        give(LpbmFunction(LogConcaveFn::new(phi, ClassTag::A0)), out);
        Ok(())
    })
}

/// # Safety
/// `f` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn lpbm_function_free(f: *mut LpbmFunction) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Number of grid nodes of `f`.
///
/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpbm_function_len(f: *const LpbmFunction, out: *mut usize) -> LpbmStatus {
    guard(|| {
        *out_ptr(out, "out")? = get(f, "f")?.0.spec().len();
        Ok(())
    })
}

/// Copies the potential values into `buf` (`len` entries, +inf allowed).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lpbm_function_values(f: *const LpbmFunction, buf: *mut f64, len: usize) -> LpbmStatus {
    guard(|| {
        let f = get(f, "f")?;
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        let v = f.0.phi().values();
        if len != v.len() {
            return Err(Error::Validation(format!("buffer holds {len} values, grid has {}", v.len())).into());
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, len);
        Ok(())
    })
}

/// J(f) = ∫ e^{-phi}.
///
/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpbm_total_mass(f: *const LpbmFunction, out: *mut f64) -> LpbmStatus {
    guard(|| {
        *out_ptr(out, "out")? = total_mass(&get(f, "f")?.0);
        Ok(())
    })
}

/// Ent(f) = ∫ f log f - J(f) log J(f).
///
/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpbm_entropy(f: *const LpbmFunction, out: *mut f64) -> LpbmStatus {
    guard(|| {
        *out_ptr(out, "out")? = entropy(&get(f, "f")?.0)?;
        Ok(())
    })
}

/// e^{-phi*} on the default dual grid.
///
/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpbm_conjugate(f: *const LpbmFunction, out: *mut *mut LpbmFunction) -> LpbmStatus {
    guard(|| {
        let f = get(f, "f")?;
        let out = out_ptr(out, "out")?;
        let star = conjugate_fast(f.0.phi(), &default_dual_spec(f.0.phi())?)?;
        give(LpbmFunction(LogConcaveFn::new(star, ClassTag::General)), out);
        Ok(())
    })
}

/// alpha.f (+)_p beta.g
///
/// # Safety
/// `f`, `g` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpbm_p_sum(
    f: *const LpbmFunction,
    g: *const LpbmFunction,
    alpha: f64,
    beta: f64,
    p: f64,
    out: *mut *mut LpbmFunction,
) -> LpbmStatus {
    guard(|| {
        let (f, g) = (get(f, "f")?, get(g, "g")?);
        let out = out_ptr(out, "out")?;
        let r = p_sum(&f.0, &g.0, alpha, beta, p, &SumOptions::default())?;
        give(LpbmFunction(r.result), out);
        Ok(())
    })
}

/// δJ_p(f,g) by difference quotients and extrapolation.
///
/// # Safety
/// `f`, `g` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpbm_delta_j_numeric(
    f: *const LpbmFunction,
    g: *const LpbmFunction,
    p: f64,
    out: *mut f64,
) -> LpbmStatus {
    guard(|| {
        let (f, g) = (get(f, "f")?, get(g, "g")?);
        let out = out_ptr(out, "out")?;
        *out = delta_j_numeric(&f.0, &g.0, p, &DEFAULT_SCHEDULE, &VariationOptions::default())?.value;
        Ok(())
    })
}

fn report_out(r: MarginReport, json: &mut *mut c_char, pass: Option<&mut i32>) -> Result<(), Fail> {
    if let Some(p) = pass {
        *p = r.pass as i32;
    }
    give_string(serde_json::to_string(&r).map_err(Error::from)?, json)
}

/// Prékopa–Leindler type check. Writes the report JSON and `pass` (0/1).
///
/// # Safety
/// `f`, `g` must be live handles; `report_json` must be valid; `pass` may be null.
#[no_mangle]
pub unsafe extern "C" fn lpbm_check_prekopa_leindler(
    f: *const LpbmFunction,
    g: *const LpbmFunction,
    lambda: f64,
    p: f64,
    report_json: *mut *mut c_char,
    pass: *mut i32,
) -> LpbmStatus {
    guard(|| {
        let (f, g) = (get(f, "f")?, get(g, "g")?);
        let json = out_ptr(report_json, "report_json")?;
        let r = check_prekopa_leindler(&f.0, &g.0, lambda, p, &CheckConfig::default())?;
        report_out(r, json, pass.as_mut())
    })
}

/// Santaló product check for an even function.
///
/// # Safety
/// `f` must be a live handle; `report_json` must be valid; `pass` may be null.
#[no_mangle]
pub unsafe extern "C" fn lpbm_check_santalo(
    f: *const LpbmFunction,
    report_json: *mut *mut c_char,
    pass: *mut i32,
) -> LpbmStatus {
    guard(|| {
        let f = get(f, "f")?;
        let json = out_ptr(report_json, "report_json")?;
        let r = check_santalo(&f.0, None, &CheckConfig::default())?;
        report_out(r, json, pass.as_mut())
    })
}

/// ν = normalization · μ_p(f,·) with Ω cut `eps_omega` (≤ 0 for the default).
///
/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpbm_forward_measure(
    f: *const LpbmFunction,
    p: f64,
    normalization: f64,
    eps_omega: f64,
    out: *mut *mut LpbmMeasure,
) -> LpbmStatus {
    guard(|| {
        let f = get(f, "f")?;
        let out = out_ptr(out, "out")?;
        let opts = LpMeasureOptions { merge_radius: None, eps_omega: (eps_omega > 0.0).then_some(eps_omega) };
        give(LpbmMeasure(forward_measure(&f.0, p, normalization, &opts)?), out);
        Ok(())
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpbm_measure_from_json(json: *const c_char, out: *mut *mut LpbmMeasure) -> LpbmStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let out = out_ptr(out, "out")?;
        give(LpbmMeasure(DiscreteMeasure::from_json(text)?), out);
        Ok(())
    })
}

/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpbm_measure_to_json(m: *const LpbmMeasure, out: *mut *mut c_char) -> LpbmStatus {
    guard(|| {
        let m = get(m, "m")?;
        let out = out_ptr(out, "out")?;
        give_string(m.0.to_json()?, out)
    })
}

/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpbm_measure_len(m: *const LpbmMeasure, out: *mut usize) -> LpbmStatus {
    guard(|| {
        *out_ptr(out, "out")? = get(m, "m")?.0.len();
        Ok(())
    })
}

/// # Safety
/// `m` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn lpbm_measure_free(m: *mut LpbmMeasure) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Solves the Lp Minkowski problem for `m`. `config_json` may be null, in
/// which case defaults sized from the measure are used with `p` and `seed`.
/// Writes the result as JSON.
///
/// # Safety
/// `m` must be a live handle; `config_json` null or NUL-terminated;
/// `result_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lpbm_solve(
    m: *const LpbmMeasure,
    config_json: *const c_char,
    p: f64,
    seed: u64,
    result_json: *mut *mut c_char,
) -> LpbmStatus {
    guard(|| {
        let m = get(m, "m")?;
        let out = out_ptr(result_json, "result_json")?;
        let cfg = if config_json.is_null() {
            let mut c = SolverConfig::for_measure(&m.0, p)?;
            c.seed = seed;
            c
        } else {
            serde_json::from_str(read_str(config_json, "config_json")?).map_err(Error::from)?
        };
        let r = solve(&m.0, &cfg)?;
        give_string(serde_json::to_string(&r).map_err(Error::from)?, out)
    })
}
