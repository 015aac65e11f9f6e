//! C ABI for `bregopt`.
//!
//! Problems and results are opaque heap handles owned by the caller and
//! released with the matching `*_free` function. Every fallible entry point
//! returns a [`BregoptStatus`]; on failure the message is available from
//! [`bregopt_last_error_message`] on the same thread. Panics never cross the
//! boundary and are reported as [`BregoptStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use ndarray::ArrayView1;

use bregopt::harness::{generate_instance_with, solve_instance, Instance, InstanceOptions};
use bregopt::harness::{ProblemKind, SolverKind};
use bregopt::kernels::{BurgKernel, EuclideanKernel, Kernel, QuarticKernel};
use bregopt::solvers::{ExitMode, ExitReason, LineSearchConfig, SolveResult, SolverConfig};
use bregopt::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BregoptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    NumericalFailure = 4,
    DimensionMismatch = 5,
    InvalidConfig = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BregoptProblemKind {
    Plip = 0,
    Qip = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BregoptSolverKind {
    Bpg = 0,
    Bpge = 1,
    Pg = 2,
    Pge = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BregoptKernelKind {
    Euclidean = 0,
    Burg = 1,
    Quartic = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BregoptExitMode {
    IterateRelative = 0,
    ObjectiveRelative = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BregoptExitReason {
    Tolerance = 0,
    MaxIterations = 1,
    NumericalFailure = 2,
}

/// Solver settings. A nonpositive `lambda` means `1 / L` for the problem.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BregoptSolverConfig {
    pub lambda: f64,
    pub beta0: f64,
    pub eta: f64,
    pub rho: f64,
    pub max_shrinks: u32,
    pub tol: f64,
    pub k_max: usize,
    pub exit_mode: BregoptExitMode,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BregoptIterationRecord {
    pub k: usize,
    pub psi: f64,
    pub dh_step: f64,
    pub lyapunov: f64,
    pub beta: f64,
    pub shrinks: u32,
    /// Nonzero when the line search gave up and used `beta = 0`.
    pub beta_fallback: u8,
    pub residual: f64,
    pub wall_time_s: f64,
}

/// Opaque problem instance.
pub struct BregoptProblem {
    inner: Instance,
}

/// Opaque solve result.
pub struct BregoptResult {
    inner: SolveResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> BregoptStatus {
    match e {
        Error::Domain(_) => BregoptStatus::Domain,
        Error::NumericalFailure(_) => BregoptStatus::NumericalFailure,
        Error::DimensionMismatch { .. } => BregoptStatus::DimensionMismatch,
        Error::InvalidConfig(_) => BregoptStatus::InvalidConfig,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => BregoptStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (BregoptStatus, String)>) -> BregoptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            BregoptStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside bregopt");
            BregoptStatus::Panic
        }
    }
}

fn lib<T>(r: bregopt::Result<T>) -> Result<T, (BregoptStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (BregoptStatus, String) {
    (BregoptStatus::NullPointer, format!("{what} is null"))
}

unsafe fn view<'a>(
    data: *const f64,
    len: usize,
    what: &str,
) -> Result<&'a [f64], (BregoptStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { slice::from_raw_parts(data, len) })
}

unsafe fn view_mut<'a>(
    data: *mut f64,
    len: usize,
    what: &str,
) -> Result<&'a mut [f64], (BregoptStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { slice::from_raw_parts_mut(data, len) })
}

fn copy_out(src: &[f64], dst: &mut [f64]) -> Result<(), (BregoptStatus, String)> {
    if src.len() != dst.len() {
        return Err((
            BregoptStatus::DimensionMismatch,
            format!("buffer holds {} values, expected {}", dst.len(), src.len()),
        ));
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn bregopt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Defaults: `lambda = 1/L`, `beta0 = 0.99`, `eta = 0.5`, `rho = 0.99`,
/// 60 shrinks, `tol = 1e-6`, `k_max = 5000`, iterate-relative exit.
#[no_mangle]
pub extern "C" fn bregopt_solver_config_default() -> BregoptSolverConfig {
    let ls = LineSearchConfig::default();
    BregoptSolverConfig {
        lambda: 0.0,
        beta0: ls.beta0,
        eta: ls.eta,
        rho: ls.rho,
        max_shrinks: ls.max_shrinks,
        tol: SolverConfig::DEFAULT_TOL,
        k_max: SolverConfig::DEFAULT_K_MAX,
        exit_mode: BregoptExitMode::IterateRelative,
    }
}

/// Generates a seeded instance into `*out`. `theta` is the ℓ1 weight and is
/// ignored for PLIP.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn bregopt_problem_generate(
    kind: BregoptProblemKind,
    m: usize,
    d: usize,
    seed: u64,
    theta: f64,
    out: *mut *mut BregoptProblem,
) -> BregoptStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let problem = match kind {
            BregoptProblemKind::Plip => ProblemKind::Plip,
            BregoptProblemKind::Qip => ProblemKind::Qip,
        };
        let opts = InstanceOptions {
            theta,
            ..InstanceOptions::default()
        };
        let inner = lib(generate_instance_with(problem, m, d, seed, &opts))?;
        unsafe { *out = Box::into_raw(Box::new(BregoptProblem { inner })) };
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a handle from [`bregopt_problem_generate`] not
/// yet freed.
#[no_mangle]
pub unsafe extern "C" fn bregopt_problem_free(problem: *mut BregoptProblem) {
    if !problem.is_null() {
        drop(unsafe { Box::from_raw(problem) });
    }
}

/// Dimension `d`, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bregopt_problem_dim(problem: *const BregoptProblem) -> usize {
    unsafe { problem.as_ref() }.map_or(0, |p| p.inner.dim())
}

/// The smad constant `L`, or NaN for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bregopt_problem_smad_constant(problem: *const BregoptProblem) -> f64 {
    unsafe { problem.as_ref() }.map_or(f64::NAN, |p| p.inner.smad_constant())
}

/// Copies the seeded starting point into `out[0..len]`.
///
/// # Safety
/// `problem` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bregopt_problem_initial_point(
    problem: *const BregoptProblem,
    out: *mut f64,
    len: usize,
) -> BregoptStatus {
    guard(|| {
        let p = unsafe { problem.as_ref() }.ok_or_else(|| null("problem"))?;
        let dst = unsafe { view_mut(out, len, "out") }?;
        copy_out(p.inner.initial_point().as_slice().unwrap(), dst)
    })
}

/// Objective value `Ψ(x)` into `*value`.
///
/// # Safety
/// `problem` must be a live handle, `x` must hold `len` doubles and `value`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn bregopt_problem_objective(
    problem: *const BregoptProblem,
    x: *const f64,
    len: usize,
    value: *mut f64,
) -> BregoptStatus {
    guard(|| {
        let p = unsafe { problem.as_ref() }.ok_or_else(|| null("problem"))?;
        let x = ArrayView1::from(unsafe { view(x, len, "x") }?);
        let v = match &p.inner {
            Instance::Plip(i) => lib(i.objective().value(x))?,
            Instance::Qip(i) => lib(i.objective().value(x))?,
        };
        if value.is_null() {
            return Err(null("value"));
        }
        unsafe { *value = v };
        Ok(())
    })
}

/// Runs a solver. `x0` may be null to start from the seeded initial point.
/// A run that stops on a numerical failure still returns `Ok` and a result
/// whose exit reason says so.
///
/// # Safety
/// `problem` must be a live handle, `config` must point to a config, `x0`
/// must be null or hold `len` doubles, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bregopt_solve(
    problem: *const BregoptProblem,
    solver: BregoptSolverKind,
    config: *const BregoptSolverConfig,
    x0: *const f64,
    len: usize,
    out: *mut *mut BregoptResult,
) -> BregoptStatus {
    guard(|| {
        let p = unsafe { problem.as_ref() }.ok_or_else(|| null("problem"))?;
        let c = unsafe { config.as_ref() }.ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let x0 = if x0.is_null() {
            p.inner.initial_point()
        } else {
            ArrayView1::from(unsafe { view(x0, len, "x0") }?).to_owned()
        };
        let smad = p.inner.smad_constant();
        let cfg = SolverConfig {
            line_search: LineSearchConfig {
                beta0: c.beta0,
                eta: c.eta,
                rho: c.rho,
                max_shrinks: c.max_shrinks,
            },
            tol: c.tol,
            k_max: c.k_max,
            exit_mode: match c.exit_mode {
                BregoptExitMode::IterateRelative => ExitMode::IterateRelative,
                BregoptExitMode::ObjectiveRelative => ExitMode::ObjectiveRelative,
            },
            ..SolverConfig::new(if c.lambda > 0.0 { c.lambda } else { 1.0 / smad })
        };
        let kind = match solver {
            BregoptSolverKind::Bpg => SolverKind::Bpg,
            BregoptSolverKind::Bpge => SolverKind::Bpge,
            BregoptSolverKind::Pg => SolverKind::Pg,
            BregoptSolverKind::Pge => SolverKind::Pge,
        };
        let inner = lib(solve_instance(&p.inner, kind, &x0, &cfg))?;
        unsafe { *out = Box::into_raw(Box::new(BregoptResult { inner })) };
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a handle from [`bregopt_solve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bregopt_result_free(result: *mut BregoptResult) {
    if !result.is_null() {
        drop(unsafe { Box::from_raw(result) });
    }
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bregopt_result_iterations(result: *const BregoptResult) -> usize {
    unsafe { result.as_ref() }.map_or(0, |r| r.inner.iterations)
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bregopt_result_psi_final(result: *const BregoptResult) -> f64 {
    unsafe { result.as_ref() }.map_or(f64::NAN, |r| r.inner.psi_final)
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bregopt_result_exit_reason(
    result: *const BregoptResult,
) -> BregoptExitReason {
    match unsafe { result.as_ref() }.map(|r| r.inner.exit_reason) {
        Some(ExitReason::Tolerance) => BregoptExitReason::Tolerance,
        Some(ExitReason::MaxIterations) => BregoptExitReason::MaxIterations,
        Some(ExitReason::NumericalFailure) | None => BregoptExitReason::NumericalFailure,
    }
}

/// Copies the last iterate into `out[0..len]`.
///
/// # Safety
/// `result` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bregopt_result_x_final(
    result: *const BregoptResult,
    out: *mut f64,
    len: usize,
) -> BregoptStatus {
    guard(|| {
        let r = unsafe { result.as_ref() }.ok_or_else(|| null("result"))?;
        let dst = unsafe { view_mut(out, len, "out") }?;
        copy_out(&r.inner.x_final.to_vec(), dst)
    })
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bregopt_result_trace_len(result: *const BregoptResult) -> usize {
    unsafe { result.as_ref() }.map_or(0, |r| r.inner.trace.len())
}

/// Copies trace entry `index` (0-based; entry `i` describes iteration
/// `i + 1`) into `*out`.
///
/// # Safety
/// `result` must be a live handle and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bregopt_result_trace_record(
    result: *const BregoptResult,
    index: usize,
    out: *mut BregoptIterationRecord,
) -> BregoptStatus {
    guard(|| {
        let r = unsafe { result.as_ref() }.ok_or_else(|| null("result"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let rec = r.inner.trace.get(index).ok_or_else(|| {
            (
                BregoptStatus::InvalidArgument,
                format!(
                    "trace index {index} out of range (len {})",
                    r.inner.trace.len()
                ),
            )
        })?;
        unsafe {
            *out = BregoptIterationRecord {
                k: rec.k,
                psi: rec.psi,
                dh_step: rec.dh_step,
                lyapunov: rec.lyapunov,
                beta: rec.beta_accepted,
                shrinks: rec.shrink_count,
                beta_fallback: rec.beta_fallback as u8,
                residual: rec.residual,
                wall_time_s: rec.wall_time,
            }
        };
        Ok(())
    })
}

/// Bregman distance `D_h(x, y)` of the chosen kernel into `*value`.
///
/// # Safety
/// `x` and `y` must hold `len` doubles and `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bregopt_bregman(
    kernel: BregoptKernelKind,
    x: *const f64,
    y: *const f64,
    len: usize,
    value: *mut f64,
) -> BregoptStatus {
    guard(|| {
        let x = ArrayView1::from(unsafe { view(x, len, "x") }?);
        let y = ArrayView1::from(unsafe { view(y, len, "y") }?);
        let d = match kernel {
            BregoptKernelKind::Euclidean => lib(EuclideanKernel::new(len).bregman(x, y))?,
            BregoptKernelKind::Burg => lib(BurgKernel::new(len).bregman(x, y))?,
            BregoptKernelKind::Quartic => lib(QuarticKernel::new(len).bregman(x, y))?,
        };
        if value.is_null() {
            return Err(null("value"));
        }
        unsafe { *value = d };
        Ok(())
    })
}
