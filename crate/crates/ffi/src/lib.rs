//! C ABI for jgap.
//!
//! Objects cross the boundary as opaque handles created by `*_new` / `*_sample`
//! style constructors and released with the matching `*_free`. Every fallible
//! call returns a [`JgapStatus`]; on failure a message is kept per thread and
//! can be read with [`jgap_last_error`]. Absent optional values are reported as
//! NaN.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use jgap::bilayer::{self, BilayerConfig, BilayerProblem, BilayerSolution};
use jgap::field::{sample, Interval};
use jgap::gap::{classify, halving_ladder};
use jgap::{Error, GridFunction, Integrand, Kernel, Verdict};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JgapStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Unknown = 3,
    Unsupported = 4,
    Precondition = 5,
    GridMismatch = 6,
    NonIntegrable = 7,
    NonFinite = 8,
    NonConvergence = 9,
    Infeasible = 10,
    TooLarge = 11,
    Parse = 12,
    Io = 13,
    BufferTooSmall = 14,
    Panic = 15,
}

/// Classifier verdict.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JgapVerdict {
    W12Consistent = 0,
    SubW12 = 1,
    Inconclusive = 2,
}

impl From<Verdict> for JgapVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::W12Consistent => JgapVerdict::W12Consistent,
            Verdict::SubW12 => JgapVerdict::SubW12,
            Verdict::Inconclusive => JgapVerdict::Inconclusive,
        }
    }
}

/// A validated mollifier or attraction kernel.
pub struct JgapKernel {
    inner: Kernel,
}

/// A function sampled on a uniform grid.
pub struct JgapGrid {
    inner: GridFunction,
}

/// A bilayer minimizer together with the problem it solves.
pub struct JgapSolution {
    problem: BilayerProblem,
    config: BilayerConfig,
    inner: BilayerSolution,
}

/// Moment data of a kernel. `second_moment` is row-major; only the leading
/// `dim * dim` entries are used.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JgapMoments {
    pub dim: usize,
    pub mass: f64,
    pub second_moment: [f64; 4],
    /// a(phi), NaN for non-radial kernels.
    pub radial_moment: f64,
    /// max |A - a I|, NaN for non-radial kernels.
    pub radial_residual: f64,
    pub min_eigenvalue: f64,
    /// Every mollifier assumption held within the tolerance.
    pub assumptions_ok: bool,
}

/// Power-law fit of a gap ladder.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JgapLadderSummary {
    pub rungs: usize,
    pub dropped: usize,
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub limit_estimate: f64,
    /// Upper bound on the Dirichlet energy implied by the fit, NaN when unavailable.
    pub energy_bound: f64,
    pub verdict: JgapVerdict,
}

/// Scalar outcome of a bilayer solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JgapSolutionInfo {
    pub cells: usize,
    pub spacing: f64,
    pub length: f64,
    pub energy: f64,
    pub mass_residual: f64,
    pub min_value: f64,
    pub pair_max: f64,
    pub iterations: usize,
    pub stationarity: f64,
    pub converged: bool,
}

/// Outcome of the smoothing-comparison certificate.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JgapCertificateSummary {
    pub exponent: f64,
    pub r_squared: f64,
    pub ratio_spread: f64,
    pub minimal: bool,
    pub accepted: bool,
    pub verdict: JgapVerdict,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> JgapStatus {
    match e {
        Error::InvalidInput(_) => JgapStatus::InvalidInput,
        Error::Unknown { .. } => JgapStatus::Unknown,
        Error::Unsupported(_) => JgapStatus::Unsupported,
        Error::Precondition(_) => JgapStatus::Precondition,
        Error::GridMismatch(_) => JgapStatus::GridMismatch,
        Error::NonIntegrable(_) => JgapStatus::NonIntegrable,
        Error::NonFinite(_) => JgapStatus::NonFinite,
        Error::NonConvergence { .. } => JgapStatus::NonConvergence,
        Error::Infeasible(_) => JgapStatus::Infeasible,
        Error::TooLarge { .. } => JgapStatus::TooLarge,
        Error::Parse(_) => JgapStatus::Parse,
        Error::Io(_) => JgapStatus::Io,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Buffer { need: usize, have: usize },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> JgapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => JgapStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for {what}"));
            JgapStatus::NullPointer
        }
        Ok(Err(Failure::Buffer { need, have })) => {
            set_error(format!("buffer holds {have} values, {need} needed"));
            JgapStatus::BufferTooSmall
        }
        Err(_) => {
            set_error("internal panic".into());
            JgapStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::InvalidInput(format!("{what} is not valid UTF-8"))))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

fn or_nan(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn jgap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a `shape:dim:radius` kernel spec.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jgap_kernel_new(spec: *const c_char, out: *mut *mut JgapKernel) -> JgapStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let k = Kernel::parse_spec(str_arg(spec, "spec")?)?;
        *out = Box::into_raw(Box::new(JgapKernel { inner: k }));
        Ok(())
    })
}

/// Releases a kernel. NULL is ignored.
///
/// # Safety
/// `k` must come from [`jgap_kernel_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jgap_kernel_free(k: *mut JgapKernel) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Moments and assumption checks at tolerance `tol`.
///
/// # Safety
/// `k` must be a live kernel handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jgap_kernel_moments(k: *const JgapKernel, tol: f64, out: *mut JgapMoments) -> JgapStatus {
    guard(|| {
        let k = ref_arg(k, "kernel")?;
        let out = out_arg(out, "out")?;
        let r = k.inner.validate(tol)?;
        let mut a = [0.0; 4];
        a[..r.second_moment.len()].copy_from_slice(&r.second_moment);
        *out = JgapMoments {
            dim: r.dim,
            mass: r.mass,
            second_moment: a,
            radial_moment: or_nan(r.radial_moment),
            radial_residual: or_nan(r.residuals.radial_identity),
            min_eigenvalue: r.min_eigenvalue(),
            assumptions_ok: r.all_pass(),
        };
        Ok(())
    })
}

/// Samples a test function (`gaussian`, `tent`, `step`, `cusp:<alpha>`) on
/// `[lo, hi]^dim` with spacing `dx`.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jgap_grid_sample(
    spec: *const c_char,
    dim: usize,
    lo: f64,
    hi: f64,
    dx: f64,
    out: *mut *mut JgapGrid,
) -> JgapStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let spec = jgap::TestFunctionSpec::parse(str_arg(spec, "spec")?)?;
        let g = sample(&spec, dim, Interval::new(lo, hi)?, dx)?;
        *out = Box::into_raw(Box::new(JgapGrid { inner: g }));
        Ok(())
    })
}

/// Wraps caller-owned samples (copied). `nx` nodes along x; `ny` is 0 for a
/// 1-D grid, otherwise values are row-major with x fastest.
///
/// # Safety
/// `origin` must hold `dim` values and `values` `nx * max(ny, 1)` values.
#[no_mangle]
pub unsafe extern "C" fn jgap_grid_from_values(
    origin: *const f64,
    dx: f64,
    nx: usize,
    ny: usize,
    values: *const f64,
    out: *mut *mut JgapGrid,
) -> JgapStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if origin.is_null() {
            return Err(Failure::Null("origin"));
        }
        if values.is_null() {
            return Err(Failure::Null("values"));
        }
        let (shape, dim) = if ny == 0 { (vec![nx], 1) } else { (vec![nx, ny], 2) };
        let len = shape.iter().product::<usize>();
        let origin = std::slice::from_raw_parts(origin, dim).to_vec();
        let values = std::slice::from_raw_parts(values, len).to_vec();
        let g = GridFunction::new(origin, dx, shape, values)?;
        *out = Box::into_raw(Box::new(JgapGrid { inner: g }));
        Ok(())
    })
}

/// Number of samples in the grid (0 for NULL).
///
/// # Safety
/// `g` must be NULL or a live grid handle.
#[no_mangle]
pub unsafe extern "C" fn jgap_grid_len(g: *const JgapGrid) -> usize {
    g.as_ref().map_or(0, |g| g.inner.len())
}

/// Copies the samples into `buf`, which must hold at least
/// [`jgap_grid_len`] values.
///
/// # Safety
/// `g` must be a live grid handle; `buf` must be writable for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn jgap_grid_values(g: *const JgapGrid, buf: *mut f64, cap: usize) -> JgapStatus {
    guard(|| {
        let g = ref_arg(g, "grid")?;
        copy_out(g.inner.values(), buf, cap)
    })
}

unsafe fn copy_out(v: &[f64], buf: *mut f64, cap: usize) -> Result<(), Failure> {
    if buf.is_null() {
        return Err(Failure::Null("buf"));
    }
    if cap < v.len() {
        return Err(Failure::Buffer {
            need: v.len(),
            have: cap,
        });
    }
    ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
    Ok(())
}

/// Releases a grid. NULL is ignored.
///
/// # Safety
/// `g` must come from a grid constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jgap_grid_free(g: *mut JgapGrid) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Jensen gap `int f(u) - f(u * phi_eps)` for integrand `square`, `entropy`
/// or `logcosh`.
///
/// # Safety
/// Handles must be live; `integrand` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn jgap_gap(
    g: *const JgapGrid,
    k: *const JgapKernel,
    integrand: *const c_char,
    eps: f64,
    out: *mut f64,
) -> JgapStatus {
    guard(|| {
        let (g, k) = (ref_arg(g, "grid")?, ref_arg(k, "kernel")?);
        let f = Integrand::by_name(str_arg(integrand, "integrand")?)?;
        let out = out_arg(out, "out")?;
        *out = jgap::gap(&g.inner, &f, &k.inner, eps)?;
        Ok(())
    })
}

/// Small-eps limit `1/2 int f''(u) grad u . A grad u`.
///
/// # Safety
/// Handles must be live; `integrand` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn jgap_limit_functional(
    g: *const JgapGrid,
    k: *const JgapKernel,
    integrand: *const c_char,
    out: *mut f64,
) -> JgapStatus {
    guard(|| {
        let (g, k) = (ref_arg(g, "grid")?, ref_arg(k, "kernel")?);
        let f = Integrand::by_name(str_arg(integrand, "integrand")?)?;
        let out = out_arg(out, "out")?;
        *out = jgap::limit_functional(&g.inner, &f, &k.inner)?;
        Ok(())
    })
}

/// Gap ladder `eps_max * 2^-k`, `k < rungs`, with fit and verdict.
///
/// # Safety
/// Handles must be live; `integrand` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn jgap_ladder(
    g: *const JgapGrid,
    k: *const JgapKernel,
    integrand: *const c_char,
    eps_max: f64,
    rungs: usize,
    out: *mut JgapLadderSummary,
) -> JgapStatus {
    guard(|| {
        let (g, k) = (ref_arg(g, "grid")?, ref_arg(k, "kernel")?);
        let f = Integrand::by_name(str_arg(integrand, "integrand")?)?;
        let out = out_arg(out, "out")?;
        let fit = jgap::decay_ladder(&g.inner, &f, &k.inner, &halving_ladder(eps_max, rungs))?;
        let class = classify(&fit, &f);
        *out = JgapLadderSummary {
            rungs: fit.ladder.len(),
            dropped: fit.dropped.len(),
            exponent: or_nan(fit.exponent),
            prefactor: or_nan(fit.prefactor),
            r_squared: fit.r_squared,
            limit_estimate: or_nan(fit.limit_estimate),
            energy_bound: or_nan(class.energy_bound),
            verdict: class.verdict.into(),
        };
        Ok(())
    })
}

fn parse_config(text: *const c_char) -> Result<BilayerConfig, Failure> {
    if text.is_null() {
        return Ok(BilayerConfig::default());
    }
    let s = unsafe { str_arg(text, "config")? };
    Ok(BilayerConfig::parse(s)?)
}

/// Minimizes the bilayer energy. `config` holds `key = value` lines over the
/// defaults (NULL for all defaults). A solve that hits the iteration cap still
/// returns a handle, with status `NonConvergence`.
///
/// # Safety
/// `config` must be NULL or NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn jgap_bilayer_solve(config: *const c_char, out: *mut *mut JgapSolution) -> JgapStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = parse_config(config)?;
        let p = cfg.problem()?;
        let margin = 2.0 * cfg.eps_max * cfg.mollifier()?.support_radius();
        let (problem, sol) = bilayer::minimize_with_margin(&p, &cfg.solve_options(), margin)?;
        let converged = sol.converged;
        let (iterations, stationarity) = (sol.iterations, sol.stationarity);
        *out = Box::into_raw(Box::new(JgapSolution {
            problem,
            config: cfg,
            inner: sol,
        }));
        if converged {
            Ok(())
        } else {
            Err(Error::NonConvergence {
                iterations,
                detail: format!("stationarity {stationarity:e}"),
            }
            .into())
        }
    })
}

/// Scalar summary of a solution.
///
/// # Safety
/// `s` must be a live solution handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn jgap_solution_info(s: *const JgapSolution, out: *mut JgapSolutionInfo) -> JgapStatus {
    guard(|| {
        let s = ref_arg(s, "solution")?;
        let out = out_arg(out, "out")?;
        let sol = &s.inner;
        *out = JgapSolutionInfo {
            cells: sol.u.len(),
            spacing: s.problem.spacing(),
            length: s.problem.length(),
            energy: sol.energy,
            mass_residual: sol.feasibility.mass,
            min_value: sol.feasibility.min,
            pair_max: sol.feasibility.pair_max,
            iterations: sol.iterations,
            stationarity: sol.stationarity,
            converged: sol.converged,
        };
        Ok(())
    })
}

/// Copies the cell values of the minimizer into `buf`.
///
/// # Safety
/// `s` must be a live solution handle; `buf` writable for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn jgap_solution_values(s: *const JgapSolution, buf: *mut f64, cap: usize) -> JgapStatus {
    guard(|| {
        let s = ref_arg(s, "solution")?;
        copy_out(s.inner.u.values(), buf, cap)
    })
}

/// Runs the smoothing-comparison certificate with the mollifier and ladder of
/// the solve's config. A refused certificate is not an error; check
/// `accepted`.
///
/// # Safety
/// `s` must be a live solution handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn jgap_solution_certify(s: *const JgapSolution, out: *mut JgapCertificateSummary) -> JgapStatus {
    guard(|| {
        let s = ref_arg(s, "solution")?;
        let out = out_arg(out, "out")?;
        let k = s.config.mollifier()?;
        let eps = s.config.ladder()?;
        let cert = bilayer::certify(&s.inner, &s.problem, &k, &eps)?;
        *out = JgapCertificateSummary {
            exponent: or_nan(cert.fit.exponent),
            r_squared: cert.fit.r_squared,
            ratio_spread: cert.ratio_spread,
            minimal: cert.minimal,
            accepted: cert.accepted(),
            verdict: cert.classification.verdict.into(),
        };
        Ok(())
    })
}

/// Releases a solution. NULL is ignored.
///
/// # Safety
/// `s` must come from [`jgap_bilayer_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jgap_solution_free(s: *mut JgapSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}
